use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use reform_core::exemplar_db::{build_database, Database, TaggedModel};
use reform_core::fabrication::FabricationSpec;
use reform_core::geometry::{load_model_with, write_obj, LoadOptions, Model};
use reform_core::pipeline::{ensure_clustered, run_pipeline, JointOverride, PipelineConfig, PipelineState, TargetMaterials};
use reform_core::synthetic::{generate_synthetic_database, GeneratorConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "reform", version, about = "Material-driven reform of multi-component furniture models")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Input model: OBJ with one group per part, or model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    /// JSON map from OBJ group name to material.
    #[arg(long)]
    materials: Option<PathBuf>,
    /// Saved pipeline state to continue from.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    /// `part=mat,...`, `all=wood`, `all=metal` or `suggest`.
    #[arg(long = "target-material")]
    target_material: Option<TargetMaterials>,
    /// `i,j=kind`; may be repeated.
    #[arg(long = "joint-override")]
    joint_override: Vec<JointOverride>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and analyze a model; writes the normalized model and its contact graph.
    Ingest {
        #[command(flatten)]
        input: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate tagged synthetic furniture models.
    GenDb {
        /// Category counts chairs,tables,beds,cabinets.
        #[arg(long, value_delimiter = ',', default_values_t = [83, 32, 19, 18])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 0.2)]
        scale: f64,
        /// Also write each model as OBJ with a material sidecar.
        #[arg(long)]
        obj: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the exemplar database from tagged models.
    BuildDb {
        /// JSON list of tagged models (as written by gen-db).
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Suggest wood or metal for every part.
    Suggest(StageArgs),
    /// Choose replacement exemplars.
    Reform(StageArgs),
    /// Place replacements and restore contacts.
    Restore(StageArgs),
    /// Optimize contact angles of linear parts.
    OptimizeAngles(StageArgs),
    /// Infer joint types.
    InferJoints(StageArgs),
    /// Rescale part dimensions for mortise-tenon joints.
    Refine(StageArgs),
    /// Sculpt joint geometry and export the fabrication spec.
    FormJoints(StageArgs),
    /// Run every stage.
    Pipeline(StageArgs),
    /// Check a fabrication spec and its mesh files.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    input: ModelArgs,
    #[arg(long)]
    db: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: PathBuf,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Code<T> {
    fn input(self) -> Result<T, Failure>;
    fn stage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_INPUT,
            error: e.into(),
        })
    }

    fn stage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_STAGE,
            error: e.into(),
        })
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut PipelineConfig, o: &Overrides) {
    if let Some(t) = &o.target_material {
        cfg.targets = t.clone();
    }
    cfg.joint_overrides.extend(o.joint_override.iter().copied());
}

fn read_model(path: &Path, materials: Option<&Path>) -> anyhow::Result<Model> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    let opts = LoadOptions {
        material_sidecar: materials.map(Path::to_path_buf),
        ..Default::default()
    };
    Ok(load_model_with(path, &opts)?)
}

/// Continues a saved state, or starts one from a model.
fn open_state(cli: &Cli, args: &StageArgs) -> anyhow::Result<PipelineState> {
    let mut st = match (&args.input.state, &args.input.model) {
        (Some(s), None) => {
            let mut st = PipelineState::load(s).with_context(|| format!("loading state {}", s.display()))?;
            if cli.config.is_some() {
                st.config = load_config(cli)?;
            } else if let Some(seed) = cli.seed {
                st.config.seed = seed;
            }
            st
        }
        (None, Some(m)) => PipelineState::new(&read_model(m, args.input.materials.as_deref())?, load_config(cli)?)?,
        (Some(_), Some(_)) => bail!("give either --state or --model, not both"),
        (None, None) => bail!("--state or --model is required"),
    };
    apply_overrides(&mut st.config, &args.overrides);
    st.config.validate()?;
    Ok(st)
}

fn open_db(path: Option<&Path>, cfg: &PipelineConfig) -> anyhow::Result<Database> {
    let path = path.ok_or_else(|| anyhow!("--db is required"))?;
    let mut db = Database::load(path).with_context(|| format!("loading database {}", path.display()))?;
    ensure_clustered(&mut db, cfg)?;
    Ok(db)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn save_state(st: &PipelineState, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    st.save(&out.join("state.json"))?;
    write_json(&out.join("stage_logs.json"), &st.logs)
}

fn require(cond: bool, what: &str) -> Result<(), Failure> {
    if cond {
        Ok(())
    } else {
        Err(anyhow!("state has no {what}; run the earlier stage first")).input()
    }
}

fn run_stage(cli: &Cli, name: &str, args: &StageArgs) -> Result<(), Failure> {
    let mut st = open_state(cli, args).input()?;
    let needs_db = !matches!(name, "refine" | "form-joints");
    let db = if needs_db { Some(open_db(args.db.as_deref(), &st.config).input()?) } else { None };
    let pre = if needs_db { Some(st.preprocess_query().stage()?) } else { None };
    let (db, pre) = (db.as_ref(), pre.as_ref());
    match name {
        "suggest" => st.suggest(pre.unwrap(), db.unwrap()).stage()?,
        "reform" => st.reform(pre.unwrap(), db.unwrap()).stage()?,
        "restore" => {
            require(st.reform.is_some(), "replacement choice")?;
            st.restore(pre.unwrap(), db.unwrap()).stage()?
        }
        "optimize-angles" => {
            require(st.restored.is_some(), "restored model")?;
            st.optimize_angles(pre.unwrap(), db.unwrap()).stage()?
        }
        "infer-joints" => {
            require(st.optimized.is_some(), "optimized model")?;
            st.infer_joints(pre.unwrap(), db.unwrap()).stage()?
        }
        "refine" => {
            require(st.joints.is_some(), "joint assignments")?;
            st.refine().stage()?
        }
        "form-joints" => {
            require(st.refined.is_some(), "refined model")?;
            let formed = st.form_joints().stage()?;
            st.export(&args.out, &formed).stage()?;
        }
        _ => unreachable!("unknown stage {name}"),
    }
    save_state(&st, &args.out).stage()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Ingest { input, out } => {
            let path = input.model.as_deref().ok_or_else(|| anyhow!("--model is required")).input()?;
            let model = read_model(path, input.materials.as_deref()).input()?;
            let cfg = load_config(cli).input()?;
            let st = PipelineState::new(&model, cfg).input()?;
            let pre = st.preprocess_query().stage()?;
            fs::create_dir_all(out).input()?;
            write_json(&out.join("model.json"), &st.query).stage()?;
            write_json(&out.join("contacts.json"), &pre.contacts).stage()?;
            write_json(&out.join("repetition.json"), &pre.repetition.classes).stage()?;
            println!(
                "{} parts, {} contacts, {} ground contacts, {} repetition classes",
                pre.analyzed.parts.len(),
                pre.contacts.part_edges().count(),
                pre.contacts.ground_edges().count(),
                pre.repetition.classes.len()
            );
        }
        Command::GenDb { counts, scale, obj, out } => {
            if !(*scale > 0.0) || counts.len() != 4 {
                return Err(anyhow!("--counts needs four values and --scale must be positive")).input();
            }
            let cfg = load_config(cli).input()?;
            let gen = GeneratorConfig::scaled([counts[0], counts[1], counts[2], counts[3]], *scale);
            let models = generate_synthetic_database(&gen, cfg.seed);
            fs::create_dir_all(out).input()?;
            write_json(&out.join("models.json"), &models).stage()?;
            if *obj {
                for tm in &models {
                    let p = tm.model.parts.iter();
                    write_obj(&out.join(format!("{}.obj", tm.name)), p.map(|p| (p.name.as_str(), &p.mesh))).stage()?;
                    let mats: std::collections::BTreeMap<&str, String> =
                        tm.model.parts.iter().map(|p| (p.name.as_str(), p.material.to_string())).collect();
                    write_json(&out.join(format!("{}.materials.json", tm.name)), &mats).stage()?;
                }
            }
            println!("{} models written to {}", models.len(), out.display());
        }
        Command::BuildDb { models, out } => {
            let cfg = load_config(cli).input()?;
            let text = fs::read_to_string(models).with_context(|| format!("reading {}", models.display())).input()?;
            let tagged: Vec<TaggedModel> = serde_json::from_str(&text).context("parsing tagged models").input()?;
            let mut db = build_database(&tagged, &cfg.analysis()).stage()?;
            db.cluster_candidates(cfg.clusters, cfg.seed).stage()?;
            db.save(out).stage()?;
            println!("{} candidate parts from {} models", db.candidate_parts().count(), tagged.len());
        }
        Command::Suggest(a) => run_stage(cli, "suggest", a)?,
        Command::Reform(a) => run_stage(cli, "reform", a)?,
        Command::Restore(a) => run_stage(cli, "restore", a)?,
        Command::OptimizeAngles(a) => run_stage(cli, "optimize-angles", a)?,
        Command::InferJoints(a) => run_stage(cli, "infer-joints", a)?,
        Command::Refine(a) => run_stage(cli, "refine", a)?,
        Command::FormJoints(a) => run_stage(cli, "form-joints", a)?,
        Command::Pipeline(a) => {
            if a.input.state.is_some() {
                return Err(anyhow!("pipeline starts from --model")).input();
            }
            let st = open_state(cli, a).input()?;
            let db = open_db(a.db.as_deref(), &st.config).input()?;
            let model = read_model(a.input.model.as_deref().unwrap(), a.input.materials.as_deref()).input()?;
            let (st, spec) = run_pipeline(&model, &db, st.config, Some(&a.out)).stage()?;
            let spec = spec.expect("export ran");
            let total: f64 = st.logs.iter().map(|l| l.seconds).sum();
            println!("{} parts, {} joints, {total:.2}s; output in {}", spec.parts.len(), spec.joints.len(), a.out.display());
        }
        Command::Validate { spec } => {
            let s = FabricationSpec::load(spec).input()?;
            s.validate().stage()?;
            let dir = spec.parent().unwrap_or(Path::new("."));
            let files = s.parts.iter().map(|p| &p.mesh).chain(s.joints.iter().flat_map(|j| &j.geometry));
            for f in files {
                let p = dir.join(f);
                if !p.exists() {
                    return Err(anyhow!("missing mesh {}", p.display())).stage();
                }
            }
            println!("{}: {} parts, {} joints, ok", spec.display(), s.parts.len(), s.joints.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // Skip causes already quoted by the message above them.
            let mut msg = f.error.to_string();
            for cause in f.error.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}
