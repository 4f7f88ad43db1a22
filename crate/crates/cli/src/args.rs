use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use narrowpass_core::densifier::LatticeConfig;
use narrowpass_core::eval::{EvalParams, PolicyAdapter, DEFAULT_TIMEOUT_SECS};
use narrowpass_core::reward::CostWeights;
use narrowpass_core::scene::{DistributionTag, ObjectShape};
use narrowpass_core::textio::DEFAULT_ROWS_PER_OPENING;
use narrowpass_core::verifier::VerifyConfig;

#[derive(Debug, Parser)]
#[command(name = "narrowpass", version, about = "Scene generation, verification and scoring for rigid-body planning through narrow openings")]
pub struct Cli {
    /// Default location for generated scenes, runs and demonstrations.
    #[arg(long, global = true, env = "NARROWPASS_DATA_DIR", default_value = "narrowpass-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a batch of scenes as JSON files.
    Gen(GenArgs),
    /// Print the prompt for a scene.
    Prompt(PromptArgs),
    /// Densify waypoints and verify the trajectory.
    Verify(VerifyArgs),
    /// Densify waypoints into a JSON-lines trajectory.
    Densify(DensifyArgs),
    /// Compute the geometric cost and reward of a trajectory.
    Score(ScoreArgs),
    /// Evaluate a policy over a scene set.
    Eval(EvalArgs),
    /// Sample completion groups and report rewards and advantages.
    GrpoRewards(GrpoArgs),
    /// Render a scene and optional trajectory as SVG.
    Plot(PlotArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Re-verify saved demonstrations.
    DemoReplay(DemoReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Id,
    Ood,
}

impl From<Split> for DistributionTag {
    fn from(s: Split) -> Self {
        match s {
            Split::Id => DistributionTag::Id,
            Split::Ood => DistributionTag::Ood,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    #[value(name = "I", alias = "i")]
    I,
    #[value(name = "T", alias = "t")]
    T,
    #[value(name = "L", alias = "l")]
    L,
}

impl From<Shape> for ObjectShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::I => ObjectShape::I,
            Shape::T => ObjectShape::T,
            Shape::L => ObjectShape::L,
        }
    }
}

/// Verifier, lattice and reward settings shared by most subcommands.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = VerifyConfig::default().lin_limit)]
    pub lin_limit: f64,
    #[arg(long, default_value_t = VerifyConfig::default().ang_limit)]
    pub ang_limit: f64,
    #[arg(long, default_value_t = VerifyConfig::default().substep_lin_res)]
    pub substep_lin_res: f64,
    #[arg(long, default_value_t = VerifyConfig::default().substep_ang_res)]
    pub substep_ang_res: f64,
    #[arg(long, default_value_t = VerifyConfig::default().min_substeps)]
    pub min_substeps: usize,
    #[arg(long, default_value_t = LatticeConfig::default().xy_step)]
    pub xy_step: f64,
    #[arg(long, default_value_t = LatticeConfig::default().phi_step)]
    pub phi_step: f64,
    #[arg(long, default_value_t = LatticeConfig::default().max_expansions)]
    pub max_expansions: usize,
    #[arg(long, default_value_t = LatticeConfig::default().heuristic_ang_weight)]
    pub heuristic_ang_weight: f64,
    #[arg(long, default_value_t = CostWeights::default().w_b)]
    pub w_b: f64,
    #[arg(long, default_value_t = CostWeights::default().w_o)]
    pub w_o: f64,
    #[arg(long, default_value_t = CostWeights::default().w_s)]
    pub w_s: f64,
    #[arg(long, default_value_t = CostWeights::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = EvalParams::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_ROWS_PER_OPENING)]
    pub rows_per_opening: usize,
    /// Leave parse failures out of the reward statistics.
    #[arg(long)]
    pub exclude_parse_failures: bool,
}

impl ConfigArgs {
    pub fn params(&self) -> Result<EvalParams> {
        let verify = VerifyConfig {
            lin_limit: self.lin_limit,
            ang_limit: self.ang_limit,
            substep_lin_res: self.substep_lin_res,
            substep_ang_res: self.substep_ang_res,
            min_substeps: self.min_substeps,
        };
        let lattice = LatticeConfig {
            xy_step: self.xy_step,
            phi_step: self.phi_step,
            max_expansions: self.max_expansions,
            heuristic_ang_weight: self.heuristic_ang_weight,
        };
        let weights = CostWeights { w_b: self.w_b, w_o: self.w_o, w_s: self.w_s, alpha: self.alpha };
        verify.validate()?;
        lattice.validate(&verify)?;
        weights.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            bail!("epsilon must be positive, got {}", self.epsilon);
        }
        if self.rows_per_opening == 0 {
            bail!("rows-per-opening must be at least 1");
        }
        Ok(EvalParams {
            verify,
            lattice,
            weights,
            rows_per_opening: self.rows_per_opening,
            epsilon: self.epsilon,
            exclude_parse_failures: self.exclude_parse_failures,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Baseline,
    Command,
    Replay,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::Baseline)]
    pub policy: PolicyKind,
    /// Program for the command policy; reads the prompt on stdin.
    #[arg(long)]
    pub command: Option<String>,
    /// Argument passed to the command policy (repeatable).
    #[arg(long = "command-arg", allow_hyphen_values = true)]
    pub command_args: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_SECS)]
    pub timeout_secs: f64,
    /// JSON-lines file of recorded completions for the replay policy.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

impl PolicyArgs {
    pub fn adapter(&self) -> Result<PolicyAdapter> {
        Ok(match self.policy {
            PolicyKind::Baseline => PolicyAdapter::Baseline,
            PolicyKind::Command => {
                let Some(program) = self.command.clone() else { bail!("--policy command requires --command") };
                if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
                    bail!("timeout-secs must be positive");
                }
                PolicyAdapter::Command { program, args: self.command_args.clone(), timeout_secs: self.timeout_secs }
            }
            PolicyKind::Replay => {
                let Some(path) = self.replay.clone() else { bail!("--policy replay requires --replay") };
                PolicyAdapter::Replay { path }
            }
        })
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Split::Id)]
    pub split: Split,
    #[arg(long, value_enum, default_value_t = Shape::I)]
    pub shape: Shape,
    #[arg(long, default_value_t = 2)]
    pub num_openings: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON generation parameters; overrides split, shape, openings and seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output directory [default: <data-dir>/scenes]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Print the sectioned prompt document as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Waypoint or trajectory input for a single scene.
#[derive(Debug, Args)]
pub struct PathInput {
    #[arg(long)]
    pub scene: PathBuf,
    /// Waypoint CSV (`x,y,phi` header plus rows).
    #[arg(long, conflicts_with = "trajectory")]
    pub waypoints: Option<PathBuf>,
    /// Dense trajectory in JSON lines.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Require exactly rows-per-opening rows per opening in the waypoint CSV.
    #[arg(long)]
    pub completion: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: PathInput,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 1 when verification fails.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DensifyArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub waypoints: PathBuf,
    #[arg(long)]
    pub completion: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Exit with status 1 when any segment needs the straight-hop fallback.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: PathInput,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scene file, JSON-lines scene file, or directory of scene files.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Output directory [default: <data-dir>/eval]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Also write each dense trajectory under `trajectories/`.
    #[arg(long)]
    pub save_trajectories: bool,
    /// With --strict, the minimum success rate in percent.
    #[arg(long, default_value_t = 100.0)]
    pub min_success: f64,
    /// Exit with status 1 when the success rate is below --min-success.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GrpoArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub group_size: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub input: PlotInput,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct PlotInput {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, conflicts_with = "trajectory")]
    pub waypoints: Option<PathBuf>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value_t = narrowpass_service::DEFAULT_HISTORY_LIMIT)]
    pub history_limit: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DemoReplayArgs {
    /// Demonstration CSV or a directory of them; each needs its sibling `.scene.json`.
    #[arg(long)]
    pub demo: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}
