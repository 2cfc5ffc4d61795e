use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "masklm", version, about = "Binary weight masks over frozen toy encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus or task into a dataset directory.
    GenData(GenDataArgs),
    /// Pretrain an encoder with the masked-LM objective.
    Pretrain(PretrainArgs),
    /// Finetune or mask-train on a task.
    Train(TrainArgs),
    /// Learning-rate grid search with border extension.
    GridSearch(GridArgs),
    /// Evaluate a model artifact on a dataset split.
    Eval(EvalArgs),
    /// Mask training at several initial sparsities.
    SweepSparsity(SweepSparsityArgs),
    /// Mask training with the lowest or highest blocks masked.
    SweepLayers(SweepLayersArgs),
    /// Inspect mask files.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Storage needed by finetuning vs masking for a list of tasks.
    Memory(MemoryArgs),
    /// Ensemble several task models.
    Ensemble(EnsembleArgs),
    /// Evaluate a straight line or trained Bézier curve between two models.
    Connect(ConnectArgs),
    /// Write the top-level position-0 vectors of a dataset split.
    DumpEmbeddings(DumpArgs),
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Per-layer sparsity of each mask file and pairwise dissimilarity.
    Masks(AnalyzeMasksArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ReportArg {
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Corpus,
    Classification,
    Tagging,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantArg {
    A,
    B,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub seed: u64,
    /// Seed of the synthetic language shared by corpus and tasks.
    #[arg(long, default_value_t = masklm::reference::LANGUAGE_SEED)]
    pub language_seed: u64,
    #[arg(long, default_value_t = 128)]
    pub vocab: usize,
    #[arg(long, default_value_t = 400)]
    pub train: usize,
    #[arg(long, default_value_t = 200)]
    pub dev: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    /// Content tokens per sequence.
    #[arg(long, default_value_t = 16)]
    pub len: usize,
    #[arg(long, default_value_t = 4)]
    pub labels: usize,
    /// Trigger set for classification tasks.
    #[arg(long, value_enum, default_value_t = VariantArg::A)]
    pub variant: VariantArg,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Corpus directory from `gen-data --kind corpus`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 256)]
    pub ffn: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 32)]
    pub max_len: usize,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeArg {
    Finetune,
    Mask,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Fraction of mask entries initialized to zero.
    #[arg(long, default_value_t = 0.05)]
    pub init_sparsity: f64,
    /// Masked blocks: all, none, bottom:C, top:C, range:A-B or a list like 0,2.
    #[arg(long, default_value = "all")]
    pub mask_blocks: String,
    /// Binarizer threshold.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f32,
    /// Half-width of the initial score spread.
    #[arg(long, default_value_t = 0.01)]
    pub halfwidth: f32,
    /// Seed of the initial scores; defaults to the training seed.
    #[arg(long)]
    pub mask_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TaskInput {
    /// Pretrained checkpoint.
    #[arg(long)]
    pub pretrained: PathBuf,
    /// Task dataset directory.
    #[arg(long)]
    pub task: PathBuf,
    /// Dev metric (accuracy, error-rate, mcc, micro-f1); task default when omitted.
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    #[command(flatten)]
    pub input: TaskInput,
    /// Output checkpoint (finetune) or mask file (mask).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lr: f64,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Also keep the raw mask scores (checkpoint format) for resuming.
    #[arg(long)]
    pub save_scores: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    #[command(flatten)]
    pub input: TaskInput,
    /// Comma-separated initial grid; the regime default when omitted.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 6)]
    pub max_extensions: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug, Clone)]
pub struct ModelInput {
    /// Checkpoint or mask file.
    pub model: PathBuf,
    /// Pretrained checkpoint a mask file applies to.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Args, Debug)]
pub struct DataInput {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Dev)]
    pub split: SplitArg,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelInput,
    #[command(flatten)]
    pub data: DataInput,
    #[arg(long)]
    pub metric: Option<String>,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct SweepSparsityArgs {
    #[command(flatten)]
    pub input: TaskInput,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.95")]
    pub sparsities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub lr: f64,
    #[arg(long, default_value = "all")]
    pub mask_blocks: String,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionArg {
    BottomUp,
    TopDown,
    Both,
}

#[derive(Args, Debug)]
pub struct SweepLayersArgs {
    #[command(flatten)]
    pub input: TaskInput,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    pub direction: DirectionArg,
    /// Block counts; every even count up to the depth when omitted.
    #[arg(long, value_delimiter = ',')]
    pub counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub init_sparsity: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct AnalyzeMasksArgs {
    /// Mask files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchArg {
    BertBase,
    Toy,
}

#[derive(Args, Debug)]
pub struct MemoryArgs {
    #[arg(long, value_enum, default_value_t = ArchArg::BertBase)]
    pub arch: ArchArg,
    /// Masked layers, e.g. range:2-11.
    #[arg(long, default_value = "range:2-11")]
    pub plan: String,
    /// Tasks as NAME:LABELS (or just LABELS), comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "task1:2")]
    pub tasks: Vec<String>,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleModeArg {
    Labels,
    Logits,
    Probs,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    /// Member checkpoints or mask files.
    #[arg(required = true, num_args = 2..)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: EnsembleModeArg,
    #[command(flatten)]
    pub data: DataInput,
    #[arg(long)]
    pub metric: Option<String>,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
#[group(id = "shape", required = true, multiple = false, args = ["linear", "bezier"])]
pub struct ConnectArgs {
    /// Straight line between the endpoints.
    #[arg(long)]
    pub linear: bool,
    /// Bézier curve with trainable bends.
    #[arg(long)]
    pub bezier: bool,
    /// Start endpoint (γ = 0).
    pub start: PathBuf,
    /// End endpoint (γ = 1).
    pub end: PathBuf,
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataInput,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long, default_value_t = 11)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub bends: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub curve_lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub report: ReportArg,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[command(flatten)]
    pub model: ModelInput,
    #[command(flatten)]
    pub data: DataInput,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub report: ReportArg,
}
