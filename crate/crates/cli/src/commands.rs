use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thinfilm::dataset::{generate_dataset, load_dataset, write_dataset, Dataset, ThicknessGrid};
use thinfilm::evolve::{ga_compare, run_ga, FitnessBackend, GaConfig, GaResult, OPERATORS};
use thinfilm::models::{build_fnn, build_inn, compose_tandem, Algorithm, TandemModel};
use thinfilm::neural::{Checkpoint, Network};
use thinfilm::optics::{wavelength_grid, Simulator, Spectrum};
use thinfilm::training::{predict_inverse, train_fnn, train_tandem, TrainConfig, TrainReport};

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult};
use crate::io::{read_spectrum, reconstruction_csv, spectrum_csv, thickness_csv, write_text, Table};
use crate::plot::{render, Chart, Series};

#[derive(Debug, Parser)]
#[command(name = "thinfilm", version, about = "Thin-film inverse design with tandem neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded (thicknesses, spectrum) dataset with its manifest.
    GenData(GenDataArgs),
    /// Train a forward network (thicknesses -> spectrum).
    TrainFnn(TrainFnnArgs),
    /// Train a tandem network against a frozen forward network.
    TrainTnn(TrainTnnArgs),
    /// Design a stack for a target spectrum with a trained tandem.
    Invert(InvertArgs),
    /// Genetic-algorithm inverse design.
    Ga(GaArgs),
    /// Render SVG charts from report and spectrum CSVs.
    Plot(PlotArgs),
    /// Write the simulated spectrum of a stack.
    Simulate(SimulateArgs),
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: thinfilm::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub layers: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for minibatch shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for weight initialization (defaults to the shuffle seed).
    #[arg(long)]
    pub init_seed: Option<u64>,
}

impl TrainOverrides {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(e) = self.epochs {
            c.epochs = e as usize;
        }
        if let Some(b) = self.batch_size {
            c.batch_size = b as usize;
        }
        if let Some(lr) = self.lr {
            c.learning_rate = lr;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainFnnArgs {
    #[arg(long, value_parser = parse_algorithm)]
    pub algo: Option<Algorithm>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct TrainTnnArgs {
    #[arg(long, value_parser = parse_algorithm)]
    pub inn: Option<Algorithm>,
    /// Trained forward-network checkpoint (single-configuration mode).
    #[arg(long, required_unless_present = "matrix")]
    pub fnn: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path, or output directory with `--matrix`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub patience: Option<u64>,
    /// Run all nine inverse x forward pairings.
    #[arg(long)]
    pub matrix: bool,
    /// Directory holding `fnn-<algo>.ckpt`; missing ones are trained there.
    #[arg(long)]
    pub fnn_dir: Option<PathBuf>,
    /// Independent runs per configuration (seeds seed, seed+1, ...), averaged.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeat: u64,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub tnn: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Output prefix: `<out>.thicknesses.csv`, `<out>.reconstruction.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Tmm,
    Fnn,
    Both,
}

#[derive(Debug, Args)]
pub struct GaArgs {
    #[arg(long, value_enum)]
    pub backend: BackendChoice,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub fnn: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Film layer count; taken from the forward network when one is given.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub layers: Option<u64>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub target_mse: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output prefix for history, best-design and comparison files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(subcommand)]
    pub kind: PlotKind,
}

#[derive(Debug, Subcommand)]
pub enum PlotKind {
    /// Train/validation loss curves from a `*.losses.csv`.
    Losses {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Target vs predicted spectrum from a `*.reconstruction.csv`; also
    /// writes the plotted data with a `diff` column next to the SVG.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Best and mean fitness per generation from a GA history CSV.
    Ga {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated thicknesses in nm (SiO2 first, alternating).
    #[arg(long, conflicts_with_all = ["data", "row"])]
    pub thicknesses: Option<String>,
    /// Dataset CSV to take a stored spectrum from.
    #[arg(long, requires = "row")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub row: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::TrainFnn(a) => cmd_train_fnn(a),
        Command::TrainTnn(a) => cmd_train_tnn(a),
        Command::Invert(a) => invert(a),
        Command::Ga(a) => ga(a),
        Command::Plot(a) => plot(a),
        Command::Simulate(a) => simulate(a),
    }
}

/// `<path><suffix>`, e.g. `model.ckpt` -> `model.ckpt.report.toml`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn simulator() -> CliResult<Simulator> {
    Ok(Simulator::shipped()?)
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let cfg_file = RunConfig::load(a.config.as_deref())?;
    let mut config = cfg_file.gen_config();
    if let Some(l) = a.layers {
        config.layer_count = l as usize;
    }
    if let Some(c) = a.count {
        config.sample_count = c as usize;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let start = Instant::now();
    let dataset = generate_dataset(&config, &simulator()?)?;
    let manifest = write_dataset(&dataset, &a.out)?;
    println!(
        "wrote {} rows x {} columns to {} in {:.2} s (sha256 {})",
        manifest.rows,
        manifest.columns,
        a.out.display(),
        start.elapsed().as_secs_f64(),
        manifest.content_sha256
    );
    Ok(())
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    load_dataset(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_report(report: &TrainReport, ckpt: &Path) -> CliResult<()> {
    write_text(&sibling(ckpt, ".report.toml"), &report.to_toml())?;
    write_text(&sibling(ckpt, ".losses.csv"), &report.loss_csv())
}

fn dataset_meta(ck: Checkpoint, data: &Dataset) -> Checkpoint {
    let g = data.grid();
    ck.with_meta("layer_count", data.layer_count())
        .with_meta("thickness_min_nm", g.min_nm)
        .with_meta("thickness_max_nm", g.max_nm)
        .with_meta("thickness_step_nm", g.step_nm)
        .with_meta("material_tables_sha256", &data.material_manifest_hash)
}

fn fit_fnn(
    algo: Algorithm,
    data: &Dataset,
    config: &TrainConfig,
    init_seed: u64,
    out: &Path,
) -> CliResult<(Network, TrainReport)> {
    let mut net = build_fnn(algo, data.layer_count(), init_seed)?;
    let mut report = train_fnn(&mut net, data, config)?;
    report.architecture = algo.label().to_string();
    let ck = dataset_meta(Checkpoint::single("fnn", net.clone()), data)
        .with_meta("role", "fnn")
        .with_meta("algorithm", algo);
    ck.save(out)?;
    write_report(&report, out)?;
    Ok((net, report))
}

fn cmd_train_fnn(a: TrainFnnArgs) -> CliResult<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let config = a.train.apply(cfg.fnn_training());
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let algo = a.algo.unwrap_or(cfg.fnn.algorithm_or(Algorithm::Mlp));
    let init_seed = a.train.init_seed.or(cfg.fnn.init_seed).unwrap_or(config.seed);
    let data = load_data(&a.data)?;
    let (_, r) = fit_fnn(algo, &data, &config, init_seed, &a.out)?;
    println!(
        "fnn {}: epochs {} best {} val mse {:.4e} -> {:.4e}; test R2 {:.4} mse {:.4e}; {:.1} s",
        algo.label(),
        r.epochs_run,
        r.best_epoch,
        r.val_loss[0],
        r.val_loss[r.best_epoch],
        r.test.r2,
        r.test.mse,
        r.seconds
    );
    Ok(())
}

fn load_fnn(path: &Path, data: &Dataset) -> CliResult<Network> {
    let fnn = Checkpoint::load(path)
        .and_then(|c| c.take("fnn"))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if fnn.input_width() != data.layer_count() {
        return Err(CliError::data(format!(
            "width mismatch: forward network {} takes {} layers but the dataset has {} layers",
            path.display(),
            fnn.input_width(),
            data.layer_count()
        )));
    }
    Ok(fnn)
}

fn fit_tandem(
    inn_algo: Algorithm,
    fnn_algo: Option<Algorithm>,
    fnn: Network,
    data: &Dataset,
    config: &TrainConfig,
    init_seed: u64,
    out: &Path,
) -> CliResult<(TandemModel, TrainReport)> {
    let inn = build_inn(inn_algo, data.layer_count(), init_seed)?;
    let mut tandem = compose_tandem(inn, fnn).map_err(|e| CliError::data(e.to_string()))?;
    let mut report = train_tandem(&mut tandem, data, config)?;
    let fnn_label = fnn_algo.map_or("?", Algorithm::label);
    report.architecture = format!("{}-{fnn_label}", inn_algo.label());
    let mut ck = Checkpoint {
        networks: vec![("inn".into(), tandem.inn.clone()), ("fnn".into(), tandem.fnn.clone())],
        ..Default::default()
    };
    ck = dataset_meta(ck, data).with_meta("role", "tnn").with_meta("inn_algorithm", inn_algo);
    if let Some(f) = fnn_algo {
        ck = ck.with_meta("fnn_algorithm", f);
    }
    ck.save(out)?;
    write_report(&report, out)?;
    Ok((tandem, report))
}

fn cmd_train_tnn(a: TrainTnnArgs) -> CliResult<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let mut config = a.train.apply(cfg.tnn_training());
    if let Some(p) = a.patience {
        config.patience = Some(p as usize);
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let init_seed = a.train.init_seed.or(cfg.tnn.init_seed).unwrap_or(config.seed);
    let data = load_data(&a.data)?;

    if a.matrix {
        return tnn_matrix(&a, &cfg, &config, init_seed, &data);
    }
    let fnn_path = a.fnn.as_ref().ok_or_else(|| CliError::usage("--fnn is required without --matrix"))?;
    let fnn = load_fnn(fnn_path, &data)?;
    let fnn_algo = Checkpoint::load(fnn_path).ok().and_then(|c| c.metadata.get("algorithm")?.parse().ok());
    let inn_algo = a.inn.unwrap_or(cfg.tnn.algorithm_or(Algorithm::Mlp));
    let hash_before = fnn.parameter_hash();
    let (_, r) = fit_tandem(inn_algo, fnn_algo, fnn, &data, &config, init_seed, &a.out)?;
    if r.fnn_hash.as_deref() != Some(hash_before.as_str()) {
        return Err(CliError { status: crate::exit::Status::Numeric, message: "forward network changed during tandem training".into() });
    }
    println!(
        "tnn {}: epochs {} best {} val mse {:.4e} -> {:.4e}; test R2 {:.4} mse {:.4e} (epoch 0 {:.4e}); {:.1} s",
        r.architecture,
        r.epochs_run,
        r.best_epoch,
        r.val_loss[0],
        r.val_loss[r.best_epoch],
        r.test.r2,
        r.test.mse,
        r.test_mse_epoch0,
        r.seconds
    );
    Ok(())
}

fn tnn_matrix(a: &TrainTnnArgs, cfg: &RunConfig, config: &TrainConfig, init_seed: u64, data: &Dataset) -> CliResult<()> {
    std::fs::create_dir_all(&a.out)?;
    let fnn_dir = a.fnn_dir.clone().unwrap_or_else(|| a.out.clone());
    std::fs::create_dir_all(&fnn_dir)?;
    let fnn_config = a.train.apply(cfg.fnn_training());
    let mut fnns = Vec::new();
    for algo in Algorithm::ALL {
        let path = fnn_dir.join(format!("fnn-{algo}.ckpt"));
        let net = if path.exists() {
            load_fnn(&path, data)?
        } else {
            println!("training missing forward network {}", path.display());
            fit_fnn(algo, data, &fnn_config, init_seed, &path)?.0
        };
        fnns.push((algo, net));
    }
    let mut csv = String::from("tnn,inn,fnn,r2,mse,seconds,epochs_run,repeats\n");
    for (inn_algo, fnn_algo) in thinfilm::models::tandem_pairings() {
        let fnn = &fnns.iter().find(|(a, _)| *a == fnn_algo).expect("all algorithms loaded").1;
        let (mut r2, mut mse, mut secs, mut epochs) = (0.0, 0.0, 0.0, 0.0);
        for rep in 0..a.repeat {
            let run_cfg = TrainConfig { seed: config.seed + rep, ..config.clone() };
            let out = a.out.join(format!("tnn-{inn_algo}-{fnn_algo}-r{rep}.ckpt"));
            let (_, r) = fit_tandem(inn_algo, Some(fnn_algo), fnn.clone(), data, &run_cfg, init_seed + rep, &out)?;
            println!("{} run {rep}: test R2 {:.4} mse {:.4e} ({:.1} s)", r.architecture, r.test.r2, r.test.mse, r.seconds);
            r2 += r.test.r2;
            mse += r.test.mse;
            secs += r.seconds;
            epochs += r.epochs_run as f64;
        }
        let n = a.repeat as f64;
        csv.push_str(&format!(
            "{}-{},{inn_algo},{fnn_algo},{:.6},{:.6e},{:.2},{:.1},{}\n",
            inn_algo.label(),
            fnn_algo.label(),
            r2 / n,
            mse / n,
            secs / n,
            epochs / n,
            a.repeat
        ));
    }
    let path = a.out.join("matrix.csv");
    write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn grid_from(ck: &Checkpoint) -> ThicknessGrid {
    let d = ThicknessGrid::default();
    let get = |k: &str, v: f64| ck.metadata.get(k).and_then(|s| s.parse().ok()).unwrap_or(v);
    ThicknessGrid {
        min_nm: get("thickness_min_nm", d.min_nm),
        max_nm: get("thickness_max_nm", d.max_nm),
        step_nm: get("thickness_step_nm", d.step_nm),
    }
}

fn invert(a: InvertArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.tnn).map_err(|e| CliError::data(format!("{}: {e}", a.tnn.display())))?;
    let grid = grid_from(&ck);
    let inn = ck.network("inn")?.clone();
    let fnn = ck.network("fnn")?.clone();
    let target = read_spectrum(&a.target)?;
    let mut tandem = compose_tandem(inn, fnn).map_err(|e| CliError::data(e.to_string()))?;
    let design = predict_inverse(&mut tandem, &target, &grid, &simulator()?)?;
    write_text(&sibling(&a.out, ".thicknesses.csv"), &thickness_csv(&design.thicknesses_nm))?;
    write_text(&sibling(&a.out, ".reconstruction.csv"), &reconstruction_csv(&target, &design.reconstructed))?;
    let list: Vec<String> = design.thicknesses_nm.iter().map(|d| d.to_string()).collect();
    println!("thicknesses_nm = [{}]", list.join(", "));
    println!("design_mse = {:e}", design.design_mse);
    Ok(())
}

fn ga_manifest(config: &GaConfig, results: &[&GaResult], extra: &[(&str, String)]) -> String {
    let mut out = format!("operators = {:?}\n", OPERATORS);
    for (k, v) in extra {
        out.push_str(&format!("{k} = {v}\n"));
    }
    #[derive(serde::Serialize)]
    struct Section<'a> {
        config: &'a GaConfig,
    }
    out.push('\n');
    out.push_str(&toml::to_string(&Section { config }).expect("config serializes"));
    for r in results {
        out.push_str(&format!(
            "\n[{}]\nbest_mse = {:e}\ngenerations_run = {}\nbest_thicknesses_nm = {:?}\n",
            r.backend,
            r.best.fitness,
            r.generations_run,
            r.best.thicknesses_nm(&config.grid)
        ));
    }
    out
}

fn write_ga_result(prefix: &Path, r: &GaResult, grid: &ThicknessGrid) -> CliResult<()> {
    write_text(&sibling(prefix, &format!(".history-{}.csv", r.backend)), &r.history_csv())?;
    write_text(&sibling(prefix, &format!(".best-{}.csv", r.backend)), &thickness_csv(&r.best.thicknesses_nm(grid)))?;
    println!(
        "{}: best mse {:e} after {} generations ({:.1} s)",
        r.backend, r.best.fitness, r.generations_run, r.seconds
    );
    Ok(())
}

fn ga(a: GaArgs) -> CliResult<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    if a.backend != BackendChoice::Tmm && a.fnn.is_none() {
        return Err(CliError::usage("--backend fnn/both needs --fnn CKPT"));
    }
    let target = read_spectrum(&a.target)?;
    let mut fnn = match &a.fnn {
        Some(p) => Some(
            Checkpoint::load(p)
                .and_then(|c| c.take("fnn"))
                .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let layers = match (&fnn, a.layers) {
        (Some(net), Some(l)) if net.input_width() != l as usize => {
            return Err(CliError::data(format!(
                "width mismatch: --layers {l} but the forward network takes {} layers",
                net.input_width()
            )))
        }
        (Some(net), _) => net.input_width(),
        (None, Some(l)) => l as usize,
        (None, None) => cfg.data.layer_count.unwrap_or(20),
    };
    let mut config = cfg.ga_config(layers);
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(g) = a.generations {
        config.generations = g;
    }
    if let Some(p) = a.population {
        config.population_size = p;
    }
    if a.target_mse.is_some() {
        config.target_mse = a.target_mse;
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let sim = simulator()?;
    let grid = config.grid;

    match a.backend {
        BackendChoice::Tmm => {
            let r = run_ga(&target, &mut FitnessBackend::Tmm(&sim), &config)?;
            write_ga_result(&a.out, &r, &grid)?;
            write_text(&sibling(&a.out, ".manifest.toml"), &ga_manifest(&config, &[&r], &[]))?;
        }
        BackendChoice::Fnn => {
            let net = fnn.as_mut().expect("checked above");
            let r = run_ga(&target, &mut FitnessBackend::Fnn(net), &config)?;
            let tmm = target.mse(&sim.alternating_spectrum(&r.best.thicknesses_nm(&grid))?);
            write_ga_result(&a.out, &r, &grid)?;
            println!("fnn optimum re-simulated with the TMM: mse {tmm:e}");
            let extra = [("fnn_best_tmm_mse", format!("{tmm:e}"))];
            write_text(&sibling(&a.out, ".manifest.toml"), &ga_manifest(&config, &[&r], &extra))?;
        }
        BackendChoice::Both => {
            let net = fnn.as_mut().expect("checked above");
            let cmp = ga_compare(&target, &sim, net, &config)?;
            write_ga_result(&a.out, &cmp.tmm, &grid)?;
            write_ga_result(&a.out, &cmp.fnn, &grid)?;
            println!("fnn optimum re-simulated with the TMM: mse {:e}", cmp.fnn_best_tmm_mse);
            write_text(&sibling(&a.out, ".compare.csv"), &cmp.csv())?;
            let extra = [("fnn_best_tmm_mse", format!("{:e}", cmp.fnn_best_tmm_mse))];
            write_text(&sibling(&a.out, ".manifest.toml"), &ga_manifest(&config, &[&cmp.tmm, &cmp.fnn], &extra))?;
        }
    }
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult<()> {
    match a.kind {
        PlotKind::Losses { input, out } => {
            let t = Table::read(&input)?;
            let epoch = t.column("epoch")?;
            let chart = Chart { title: "Loss", x_label: "epoch", y_label: "MSE", log_y: true, x_range: None, y_range: None };
            let svg = render(
                &chart,
                &[
                    Series { name: "train", color: "#1f77b4", x: epoch, y: t.column("train_loss")? },
                    Series { name: "validation", color: "#ff7f0e", x: epoch, y: t.column("val_loss")? },
                ],
            );
            write_text(&out, &svg)
        }
        PlotKind::Spectrum { input, out } => {
            let t = Table::read(&input)?;
            let (wl, target, pred) = (t.column("wl")?, t.column("target")?, t.column("predicted")?);
            let chart = Chart {
                title: "Transmission",
                x_label: "wavelength (nm)",
                y_label: "T",
                log_y: false,
                x_range: Some((400.0, 800.0)),
                y_range: Some((0.0, 1.0)),
            };
            let svg = render(
                &chart,
                &[
                    Series { name: "target", color: "#ff7f0e", x: wl, y: target },
                    Series { name: "predicted", color: "#1f77b4", x: wl, y: pred },
                ],
            );
            let mut csv = String::from("wl,target,predicted,diff\n");
            for ((w, t), p) in wl.iter().zip(target).zip(pred) {
                csv.push_str(&format!("{w},{t},{p},{}\n", p - t));
            }
            write_text(&out, &svg)?;
            write_text(&out.with_extension("csv"), &csv)
        }
        PlotKind::Ga { input, out } => {
            let t = Table::read(&input)?;
            let g = t.column("generation")?;
            let chart =
                Chart { title: "GA fitness", x_label: "generation", y_label: "MSE", log_y: true, x_range: None, y_range: None };
            let svg = render(
                &chart,
                &[
                    Series { name: "best", color: "#1f77b4", x: g, y: t.column("best_mse")? },
                    Series { name: "mean", color: "#ff7f0e", x: g, y: t.column("mean_mse")? },
                ],
            );
            write_text(&out, &svg)
        }
    }
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let spectrum: Spectrum = match (&a.thicknesses, &a.data, a.row) {
        (Some(list), None, None) => {
            let d = list
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| CliError::usage(format!("thickness {s:?}: {e}"))))
                .collect::<CliResult<Vec<f64>>>()?;
            simulator()?.alternating_spectrum(&d).map_err(|e| CliError::usage(e.to_string()))?
        }
        (None, Some(path), Some(row)) => {
            let data = load_data(path)?;
            let sample = data.samples.get(row).ok_or_else(|| {
                CliError::usage(format!("row {row} out of range for {} samples", data.len()))
            })?;
            sample.spectrum.clone()
        }
        _ => return Err(CliError::usage("give --thicknesses or --data with --row")),
    };
    debug_assert_eq!(spectrum.values().len(), wavelength_grid().len());
    write_text(&a.out, &spectrum_csv(&spectrum))
}
