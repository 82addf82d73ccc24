// Temporary diagnostic: critic fidelity on the quadratic bandit.
use lawnsim::agent::*;
use lawnsim::mdp::StateTensor;
use lawnsim::neural::{ConvSpec, NetSpec};
use lawnsim::seeding::rng_from_seed;
use rand::Rng;
use std::sync::Arc;

fn main() {
    let spec = NetSpec {
        branch: vec![ConvSpec { in_ch: 1, out_ch: 2, kernel: 3, stride: 2, pad: 1 }],
        fusion: vec![ConvSpec { in_ch: 4, out_ch: 4, kernel: 3, stride: 2, pad: 1 }],
        attn_reduction: 2,
        spatial_kernel: 3,
        shared_widths: vec![8],
        head_widths: vec![4],
    };
    let target: [f64; 3] = [0.3, -0.2, 0.5];
    let hyper = Td3Hyper { batch: 32, buffer_capacity: 4096, lr: 1e-3, policy_delay: 2, ..Default::default() };
    let mut rng = rng_from_seed(99);
    let mut agent = Td3Agent::new(&spec, (8, 8), hyper, Algorithm::Td3, 40.0, &mut rng).unwrap();
    let state = Arc::new(StateTensor { rows: 8, cols: 8, s1: vec![0.1; 64], s2: vec![0.0; 64] });
    let mut buffer = ReplayBuffer::new(4096);
    let mut fill = rng_from_seed(100);
    let r_of = |a: &[f64; 3]| 1.0 - (a[0]-target[0]).powi(2) - (a[1]-target[1]).powi(2) - (a[2]-target[2]).powi(2);
    for _ in 0..1024 {
        let a = [fill.gen_range(-1.0..1.0), fill.gen_range(-1.0..1.0), fill.gen_range(-1.0..1.0)];
        buffer.push(Transition { s: state.clone(), a, r: r_of(&a), s_next: state.clone(), done: true });
    }
    let mut update_rng = rng_from_seed(101);
    for k in 0..6000 {
        let st = agent.update(&buffer, &mut update_rng).unwrap();
        if k % 1000 == 0 {
            let (a, _) = agent.act(&state, 0.0, true, &mut update_rng).unwrap();
            println!("update {k}: critic1 loss {:.5}, policy {:?} (r = {:.4})", st.critic1_loss, a.map(|v| (v*100.0).round()/100.0), r_of(&a));
        }
    }
    let (a, _) = agent.act(&state, 0.0, true, &mut update_rng).unwrap();
    println!("final policy {a:?}, r {:.4}", r_of(&a));
    // probe Q along each dim through the trained critic
    for dim in 0..3 {
        print!("Q slice dim {dim}: ");
        for v in [-0.9, -0.5, -0.2, 0.0, 0.2, 0.5, 0.9] {
            let mut probe = a;
            probe[dim] = v;
            let q = agent.critic_q1(&state, &probe).unwrap();
            print!("{v}:{q:.3} ");
        }
        println!();
    }
}
