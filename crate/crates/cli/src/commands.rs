//! The experiment stages. Each reads its inputs from the output directory,
//! writes its artifacts there and refreshes the manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use pricer_core::benchmark::{
    curves_to_csv, fd_pde_price, iv_curve, mc_kernel_mean, mc_price_with_kernel, moneyness_grid,
    theoretical_log_value, IvSource, PdeSlice,
};
use pricer_core::kernel_learner::{central_range, theoretical_policy, train_policy};
use pricer_core::market_data::{
    extract_windows, load_prices, simulate_paths, simulate_trajectory, write_prices, WindowSet,
};
use pricer_core::neural::{Checkpoint, Role, TrainingMetadata};
use pricer_core::price_learner::{price_curve, price_windows, train_surface_on, train_v0_on};
use pricer_core::report::{columns_to_csv, pde_slice_csv, price_curve_csv, write_text};
use pricer_core::{Error, MlpModel, OptionKind, OptionSpec, PriceTrajectory, SdeModel};

use crate::config::{ExperimentConfig, Horizon, OptionSection, TrainingSection};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

pub const TRAJECTORY: &str = "trajectory.csv";
pub const POLICY: &str = "policy.json";
pub const KERNEL_LOSS: &str = "kernel_loss.csv";

/// Points on the price grids of the curve reports.
const CURVE_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainKernel,
    TrainPrice,
    Evaluate,
    Benchmark,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainKernel => "train-kernel",
            Command::TrainPrice => "train-price",
            Command::Evaluate => "evaluate",
            Command::Benchmark => "benchmark",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn value_file(name: &str) -> String {
    format!("value_{name}.json")
}

/// A validated configuration bound to its output directory.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// Directory that relative input paths are resolved against.
    base: PathBuf,
    model: SdeModel,
}

impl Experiment {
    pub fn new(mut config: ExperimentConfig, base: &Path, out: Option<PathBuf>) -> Result<Self> {
        if let Some(out) = out {
            config.output = out;
        }
        let findings = config.findings(base);
        if !findings.is_empty() {
            return Err(CliError::Validation(findings));
        }
        let model = config.model.build()?;
        let out = config.output.clone();
        Ok(Self {
            config,
            out,
            base: base.to_path_buf(),
            model,
        })
    }

    pub fn run(&self, command: Command) -> Result<()> {
        for note in self.config.rounding_notes() {
            eprintln!("note: {note}");
        }
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        match command {
            Command::GenData => self.gen_data()?,
            Command::TrainKernel => self.train_kernel()?,
            Command::TrainPrice => self.train_price()?,
            Command::Evaluate => self.evaluate()?,
            Command::Benchmark => self.benchmark()?,
            Command::Report => self.report()?,
        }
        Manifest::update(&self.out, &self.config, command.name())?;
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, command: Command) -> Result<PathBuf> {
        let path = self.path(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::Dependency {
                artifact: path,
                command: command.name(),
            })
        }
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        write_text(&self.path(name), text)?;
        eprintln!("wrote {}", self.path(name).display());
        Ok(())
    }

    fn rate(&self) -> f64 {
        self.config.market.rate
    }

    fn trajectory(&self) -> Result<PriceTrajectory> {
        let path = self.require(TRAJECTORY, Command::GenData)?;
        Ok(load_prices(&path, self.config.data.dt)?)
    }

    fn windows(&self, traj: &PriceTrajectory, maturity: f64) -> Result<WindowSet> {
        let h = Horizon::new(maturity, self.config.data.dt)?;
        Ok(extract_windows(traj, h.steps, self.config.data.stride)?)
    }

    fn policy(&self) -> Result<MlpModel> {
        let path = self.require(POLICY, Command::TrainKernel)?;
        Ok(Checkpoint::load_role(&path, Role::Policy)?.model()?)
    }

    fn value_net(&self, option: &OptionSection) -> Result<MlpModel> {
        let path = self.require(&value_file(&option.name), Command::TrainPrice)?;
        Ok(Checkpoint::load_role(&path, Role::ValueV0)?.model()?)
    }

    /// `n` evenly spaced prices over the central 98% of the trajectory.
    fn price_grid(traj: &PriceTrajectory, n: usize) -> Vec<f64> {
        let (lo, hi) = central_range(traj.prices(), 0.98);
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn gen_data(&self) -> Result<()> {
        let d = &self.config.data;
        let traj = match &d.prices {
            Some(p) => load_prices(&self.base.join(p), d.dt)?,
            None => simulate_trajectory(&self.model, d.s0, d.dt, d.steps, d.seed)?,
        };
        let path = self.path(TRAJECTORY);
        write_prices(&path, &traj)?;
        eprintln!("wrote {} ({} prices)", path.display(), traj.len());
        Ok(())
    }

    fn metadata(
        t: &TrainingSection,
        final_loss: Option<f64>,
        rate: f64,
        dt: f64,
        n_steps: usize,
    ) -> TrainingMetadata {
        TrainingMetadata {
            episodes: t.episodes,
            final_loss,
            seed: t.seed,
            batch_size: Some(t.batch_size),
            rate: Some(rate),
            dt: Some(dt),
            n_steps: Some(n_steps),
        }
    }

    fn train_kernel(&self) -> Result<()> {
        let traj = self.trajectory()?;
        let k = &self.config.kernel;
        let h = self.config.kernel_horizon()?;
        let windows = self.windows(&traj, k.horizon)?;
        let paths = simulate_paths(
            &self.model,
            self.config.data.s0,
            traj.dt(),
            h.steps,
            k.validation_paths,
            k.validation_seed,
        )?;
        let validation = WindowSet::from_trajectories(&paths)?;
        drop(paths);
        let cfg = k.training.train_config(1, self.rate(), k.validate_every)?;
        eprintln!(
            "training the policy on {} windows of {} steps",
            windows.len(),
            h.steps
        );
        let trained = train_policy(&windows, &cfg, Some(&validation))?;

        let meta = Self::metadata(
            &k.training,
            trained.history.final_loss(),
            self.rate(),
            traj.dt(),
            h.steps,
        );
        Checkpoint::new(Role::Policy, &trained.model, meta).save(&self.path(POLICY))?;
        self.write(KERNEL_LOSS, &trained.history.to_csv())?;
        self.write("policy.csv", &self.policy_table(&trained.model, &traj)?)
    }

    /// `s,learned,optimal` over the central price range.
    fn policy_table(&self, policy: &MlpModel, traj: &PriceTrajectory) -> Result<String> {
        let s = Self::price_grid(traj, CURVE_POINTS);
        let learned = policy.predict_scalar(&s)?;
        let optimal = theoretical_policy(&self.model, self.rate());
        let optimal: Vec<f64> = s
            .iter()
            .map(|&x| optimal.eval(x))
            .collect::<pricer_core::Result<_>>()?;
        Ok(columns_to_csv(
            &["s", "learned", "optimal"],
            &[&s, &learned, &optimal],
        )?)
    }

    fn train_price(&self) -> Result<()> {
        let policy = self.policy()?;
        let traj = self.trajectory()?;
        for o in &self.config.options {
            let option = o.spec()?;
            let h = Horizon::new(o.maturity, traj.dt())?;
            let mut windows = self.windows(&traj, o.maturity)?;
            if let Some(band) = o.head_band {
                let keep: Vec<usize> = windows
                    .heads()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| (**s - o.strike).abs() <= band)
                    .map(|(j, _)| j)
                    .collect();
                windows = windows.subset(&keep)?;
            }
            let keep_paths = o.surface.is_some();
            let priced = price_windows(&policy, &windows, &option, self.rate(), keep_paths)?;
            eprintln!("training V0 for {} on {} windows", o.name, priced.len());
            let cfg = o.training.train_config(1, self.rate(), 0)?;
            let trained = train_v0_on(&priced, &cfg)?;
            let meta = Self::metadata(
                &o.training,
                trained.history.final_loss(),
                self.rate(),
                traj.dt(),
                h.steps,
            );
            Checkpoint::new(Role::ValueV0, &trained.model, meta)
                .with_option(option)
                .save(&self.path(&value_file(&o.name)))?;
            self.write(
                &format!("value_{}_loss.csv", o.name),
                &trained.history.to_csv(),
            )?;
            let curve = price_curve(&trained.model, &Self::price_grid(&traj, CURVE_POINTS))?;
            self.write(&format!("price_{}.csv", o.name), &price_curve_csv(&curve))?;

            if let Some(s) = &o.surface {
                eprintln!("training the surface for {}", o.name);
                let cfg = s.train_config(2, self.rate(), 0)?;
                let trained = train_surface_on(&priced, traj.dt(), &cfg)?;
                let meta = Self::metadata(
                    s,
                    trained.history.final_loss(),
                    self.rate(),
                    traj.dt(),
                    h.steps,
                );
                Checkpoint::new(Role::ValueSurface, &trained.model, meta)
                    .with_option(option)
                    .save(&self.path(&format!("surface_{}.json", o.name)))?;
                self.write(
                    &format!("surface_{}_loss.csv", o.name),
                    &trained.history.to_csv(),
                )?;
            }
        }
        Ok(())
    }

    /// Finite-difference prices at the effective maturity.
    fn pde_slice(&self, option: &OptionSpec) -> Result<PdeSlice> {
        let h = Horizon::new(option.maturity, self.config.data.dt)?;
        Ok(fd_pde_price(
            &self.model,
            &option.with_maturity(h.effective),
            self.rate(),
            &self.config.benchmark.grid,
        )?)
    }

    /// Prices `m K` for the configured moneyness span.
    fn moneyness_span(&self) -> Result<Vec<f64>> {
        let b = &self.config.benchmark;
        Ok(moneyness_grid(b.call_range[0], b.put_range[1], b.points)?)
    }

    fn evaluate(&self) -> Result<()> {
        for o in &self.config.options {
            let net = self.value_net(o)?;
            let option = o.spec()?;
            let slice = self.pde_slice(&option)?;
            let s: Vec<f64> = self
                .moneyness_span()?
                .iter()
                .map(|m| m * o.strike)
                .collect();
            let learned = net.predict_scalar(&s)?;
            let pde: Vec<f64> = s
                .iter()
                .map(|&x| slice.value_at(x))
                .collect::<pricer_core::Result<_>>()?;
            let err: Vec<f64> = learned
                .iter()
                .zip(&pde)
                .map(|(a, b)| (a - b).abs())
                .collect();
            let worst = err.iter().fold(0.0_f64, |m, e| m.max(*e));
            eprintln!("{}: max |learned - pde_benchmark| = {worst:.3e}", o.name);
            let csv = columns_to_csv(
                &["s", "learned", "pde_benchmark", "abs_error"],
                &[&s, &learned, &pde, &err],
            )?;
            self.write(&format!("evaluate_{}.csv", o.name), &csv)?;
        }
        Ok(())
    }

    fn benchmark(&self) -> Result<()> {
        for o in &self.config.options {
            let slice = self.pde_slice(&o.spec()?)?;
            self.write(&format!("pde_{}.csv", o.name), &pde_slice_csv(&slice))?;
        }
        let b = &self.config.benchmark;
        let d = &self.config.data;
        let h = self.config.kernel_horizon()?;
        let value = theoretical_log_value(
            &self.model,
            self.rate(),
            d.s0,
            d.dt,
            h.steps,
            b.oracle_paths,
            b.oracle_seed,
        )?;
        let optimal = theoretical_policy(&self.model, self.rate());
        let kernel = mc_kernel_mean(
            &self.model,
            &optimal,
            d.s0,
            self.rate(),
            d.dt,
            h.steps,
            b.mc_paths,
            b.mc_seed,
        )?;
        let discount = (-self.rate() * h.effective).exp();
        let csv = format!(
            "quantity,value,std_error\nlog_value,{},{}\nkernel_mean,{},{}\ndiscount_factor,{},0\n",
            value.mean, value.std_error, kernel.mean, kernel.std_error, discount
        );
        self.write("oracles.csv", &csv)
    }

    fn report(&self) -> Result<()> {
        let policy = self.policy()?;
        let traj = self.trajectory()?;
        let nets: Vec<(&OptionSection, MlpModel)> = self
            .config
            .options
            .iter()
            .map(|o| Ok((o, self.value_net(o)?)))
            .collect::<Result<_>>()?;
        self.write("figure1_policy.csv", &self.policy_table(&policy, &traj)?)?;
        self.write("figure2_iv.csv", &self.iv_table(&policy, &nets)?)?;
        self.write("figure3_loss.csv", &self.loss_table()?)
    }

    /// Learned, finite-difference and Monte Carlo implied-vol curves for the
    /// strike and maturity of the first option, quoting out of the money.
    fn iv_table(&self, policy: &MlpModel, nets: &[(&OptionSection, MlpModel)]) -> Result<String> {
        let first = &self.config.options[0];
        let nominal = first.spec()?;
        let quoted =
            nominal.with_maturity(Horizon::new(first.maturity, self.config.data.dt)?.effective);
        let grid = self.moneyness_span()?;
        let r = self.rate();

        let same_contract = |o: &OptionSection, kind: OptionKind| {
            o.kind == kind && o.strike == first.strike && o.maturity == first.maturity
        };
        let learned = iv_curve(
            |q, s| {
                let (_, net) = nets
                    .iter()
                    .find(|(o, _)| same_contract(o, q.kind))
                    .ok_or_else(|| {
                        Error::Domain(format!(
                            "no {} value network for strike {}",
                            q.kind, q.strike
                        ))
                    })?;
                net.forward(&[s])
            },
            &quoted,
            r,
            &grid,
            IvSource::Learned,
        );
        let call = self.pde_slice(&nominal.with_kind(OptionKind::Call))?;
        let put = self.pde_slice(&nominal.with_kind(OptionKind::Put))?;
        let pde = iv_curve(
            |q, s| match q.kind {
                OptionKind::Call => call.value_at(s),
                OptionKind::Put => put.value_at(s),
            },
            &quoted,
            r,
            &grid,
            IvSource::PdeBenchmark,
        );
        let b = &self.config.benchmark;
        let mc = iv_curve(
            |q, s| {
                mc_price_with_kernel(
                    &self.model,
                    policy,
                    s,
                    &q.with_maturity(first.maturity),
                    r,
                    self.config.data.dt,
                    b.mc_paths,
                    b.mc_seed,
                )
                .map(|e| e.mean)
            },
            &quoted,
            r,
            &grid,
            IvSource::McKernel,
        );
        for c in [&learned, &pde, &mc] {
            if c.gap_count() > 0 {
                eprintln!(
                    "{}: {} of {} points have no implied volatility",
                    c.source,
                    c.gap_count(),
                    c.points.len()
                );
            }
        }
        Ok(curves_to_csv(&[learned, pde, mc])?)
    }

    /// `episode,validation_loss,theoretical` from the policy training log.
    fn loss_table(&self) -> Result<String> {
        let path = self.require(KERNEL_LOSS, Command::TrainKernel)?;
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let b = &self.config.benchmark;
        let d = &self.config.data;
        let h = self.config.kernel_horizon()?;
        let target = -theoretical_log_value(
            &self.model,
            self.rate(),
            d.s0,
            d.dt,
            h.steps,
            b.oracle_paths,
            b.oracle_seed,
        )?
        .mean;
        let mut episodes = Vec::new();
        let mut losses = Vec::new();
        for line in text.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            if let [episode, _, validation] = fields[..] {
                if validation.is_empty() {
                    continue;
                }
                let bad = |_| CliError::validation(KERNEL_LOSS, format!("malformed line {line:?}"));
                episodes.push(episode.parse::<f64>().map_err(bad)?);
                losses.push(validation.parse::<f64>().map_err(bad)?);
            }
        }
        let theoretical = vec![target; episodes.len()];
        Ok(columns_to_csv(
            &["episode", "validation_loss", "theoretical"],
            &[&episodes, &losses, &theoretical],
        )?)
    }
}
