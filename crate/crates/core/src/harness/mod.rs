//! Experiment orchestration: training/evaluation runners, sweeps, CSV and
//! JSON emission, and SVG plotting.

mod csvio;
mod plot;
mod run;
mod sweep;

pub use csvio::{read_csv_skipping_comments, write_csv, TrajectoryLog};
pub use plot::{render_line_chart, render_trajectory_svg, ChartSeries};
pub use run::{
    agent_from_checkpoint, checkpoint_from_agent, resume_train, run_eval, run_random_baseline,
    run_train, EvalOptions, EvalSummary, HarnessError, ResumeState, TrainArtifacts,
};
pub use sweep::{
    generate_environment_with_ratio, mean_by_value, run_sweep, SweepAxis, SweepRow, SweepSpec,
    Variant,
};
