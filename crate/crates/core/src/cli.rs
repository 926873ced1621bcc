//! Command-line front end: one JSON config in, a deterministic report out.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::decide::{
    bdm_threshold, expected_choiceless_utility, expected_total_utility, optimal_choice, risky_threshold,
    threshold_in_money, BdmTask, RegretPreference, StochasticInfo, UtilityFunction,
};
use crate::dynamics::{long_run_shares, run_replications, DynamicsConfig, RevisionRule};
use crate::env::{build_state_space, ChoiceSet, InfoEnvironment, LotteryKind, ObservationMap};
use crate::game::{bayesian_cutoff_equilibrium, Cutoff, GameTemplate, QFunction, RegretGame};
use crate::report::{Cell, Format, Metadata, Report, Table};
use crate::xp::{agents_table, rounds_table, run_sessions, summarize_session, SessionConfig};

#[derive(Debug, Parser)]
#[command(name = "regret", version, about = "Regret-averse choice, the regret game and a synthetic experiment harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Choice set, states and the derived partitions.
    Env {
        #[command(subcommand)]
        action: EnvCommand,
    },
    Decide {
        #[command(subcommand)]
        action: DecideCommand,
    },
    Game {
        #[command(subcommand)]
        action: GameCommand,
    },
    Dynamics {
        #[command(subcommand)]
        action: DynamicsCommand,
    },
    Xp {
        #[command(subcommand)]
        action: XpCommand,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum EnvCommand {
    Inspect,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum DecideCommand {
    /// Expected choiceless and total utility of every lottery.
    Eval,
    /// Risky threshold over a learning-probability sweep.
    Threshold,
    /// Stated BDM thresholds over a learning-probability sweep.
    Bdm,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum GameCommand {
    Classify,
    Solve,
    Mixed,
    Hetero,
    Bayes,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum DynamicsCommand {
    Run,
    Shares,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum XpCommand {
    /// Sessions with per-round and per-agent records plus summaries.
    Run,
    /// Summary tables only.
    Summarize,
}

impl Command {
    pub fn name(&self) -> String {
        let (a, b) = match self {
            Command::Env { action: EnvCommand::Inspect } => ("env", "inspect"),
            Command::Decide { action } => ("decide", match action {
                DecideCommand::Eval => "eval",
                DecideCommand::Threshold => "threshold",
                DecideCommand::Bdm => "bdm",
            }),
            Command::Game { action } => ("game", match action {
                GameCommand::Classify => "classify",
                GameCommand::Solve => "solve",
                GameCommand::Mixed => "mixed",
                GameCommand::Hetero => "hetero",
                GameCommand::Bayes => "bayes",
            }),
            Command::Dynamics { action } => ("dynamics", match action {
                DynamicsCommand::Run => "run",
                DynamicsCommand::Shares => "shares",
            }),
            Command::Xp { action } => ("xp", match action {
                XpCommand::Run => "run",
                XpCommand::Summarize => "summarize",
            }),
        };
        format!("{a} {b}")
    }

    fn stochastic(&self) -> bool {
        matches!(self, Command::Dynamics { .. } | Command::Xp { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn invalid(field: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {err}"))
}

fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError::Runtime(err.to_string())
}

fn linear_utility() -> UtilityFunction<f64> {
    UtilityFunction::linear()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSection {
    #[serde(alias = "kappa1")]
    pub regret: f64,
    #[serde(alias = "kappa2", default)]
    pub rejoice: f64,
    #[serde(default = "linear_utility")]
    pub utility: UtilityFunction<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedInfo {
    Full,
    Minimal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InfoSection {
    Named(NamedInfo),
    Explicit(StochasticInfo<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub p: f64,
    pub u_high: f64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub kappas: Option<Vec<f64>>,
    pub q: QFunction<f64>,
    /// `(kappa, weight)` pairs for the private-type game.
    #[serde(default)]
    pub support: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DynamicsSection {
    #[serde(flatten)]
    pub rule: RevisionRule,
    pub steps: usize,
    #[serde(default = "one")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentSection {
    #[serde(flatten)]
    pub session: SessionConfig,
    #[serde(default = "one")]
    pub replications: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub environment: Option<ChoiceSet<f64>>,
    #[serde(default)]
    pub preferences: Option<PreferenceSection>,
    #[serde(default)]
    pub info: Option<InfoSection>,
    #[serde(default)]
    pub game: Option<GameSection>,
    #[serde(default)]
    pub dynamics: Option<DynamicsSection>,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses with the path of the failing field in the error message.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Validation(format!("{path}: {}", e.into_inner()))
        })
    }

    fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| invalid(name, "section is required for this command"))
    }

    pub fn choice_set(&self) -> Result<&ChoiceSet<f64>, CliError> {
        Self::section(&self.environment, "environment")
    }

    pub fn preference(&self) -> Result<(RegretPreference<f64>, UtilityFunction<f64>), CliError> {
        let p = Self::section(&self.preferences, "preferences")?;
        let pref = RegretPreference { regret: p.regret, rejoice: p.rejoice };
        pref.validate().map_err(|e| invalid("preferences", e))?;
        p.utility.validate().map_err(|e| invalid("preferences.utility", e))?;
        Ok((pref, p.utility.clone()))
    }

    pub fn info(&self, cs: &ChoiceSet<f64>) -> Result<StochasticInfo<f64>, CliError> {
        let info = match &self.info {
            None | Some(InfoSection::Named(NamedInfo::Full)) => StochasticInfo::Deterministic(ObservationMap::full(cs)),
            Some(InfoSection::Named(NamedInfo::Minimal)) => StochasticInfo::Deterministic(ObservationMap::minimal(cs)),
            Some(InfoSection::Explicit(info)) => info.clone(),
        };
        info.components(cs).map_err(|e| invalid("info", e))?;
        Ok(info)
    }

    pub fn game(&self) -> Result<RegretGame<f64>, CliError> {
        let g = Self::section(&self.game, "game")?;
        let kappas = match (&g.kappas, g.n, g.kappa) {
            (Some(k), None, None) => k.clone(),
            (None, Some(n), Some(k)) => vec![k; n],
            _ => return Err(invalid("game", "give either `kappas` or both `n` and `kappa`")),
        };
        let game = RegretGame { p: g.p, u_high: g.u_high, kappas, q: g.q.clone() };
        game.q.validate(game.n()).map_err(|e| invalid("game.q", e))?;
        game.validate().map_err(|e| invalid("game", e))?;
        Ok(game)
    }

    fn seed(&self, command: &Command, flag: Option<u64>) -> Result<Option<u64>, CliError> {
        match flag.or(self.seed) {
            None if command.stochastic() => Err(invalid("seed", "required for stochastic commands (set `seed` or pass --seed)")),
            s => Ok(s),
        }
    }

    fn dynamics(&self, seed: u64) -> Result<DynamicsConfig, CliError> {
        let d = Self::section(&self.dynamics, "dynamics")?;
        let cfg = DynamicsConfig { rule: d.rule, steps: d.steps, seed, replications: d.replications };
        cfg.validate().map_err(|e| invalid("dynamics", e))?;
        Ok(cfg)
    }

    fn experiment(&self) -> Result<&ExperimentSection, CliError> {
        let e = Self::section(&self.experiment, "experiment")?;
        e.session.validate().map_err(|err| invalid("experiment", err))?;
        if e.replications == 0 {
            return Err(invalid("experiment.replications", "must be at least 1"));
        }
        Ok(e)
    }
}

/// Outcome of one command: the report and the one-line summary.
fn execute(command: &Command, config: &RunConfig, seed: Option<u64>) -> Result<(String, Vec<Table>), CliError> {
    match command {
        Command::Env { .. } => env_inspect(config),
        Command::Decide { action } => match action {
            DecideCommand::Eval => decide_eval(config),
            DecideCommand::Threshold => decide_threshold(config),
            DecideCommand::Bdm => decide_bdm(config),
        },
        Command::Game { action } => game_command(*action, config),
        Command::Dynamics { action } => {
            let cfg = config.dynamics(seed.expect("checked seed"))?;
            let game = config.game()?;
            dynamics_command(*action, &game, &cfg)
        }
        Command::Xp { action } => {
            let e = config.experiment()?;
            let results = run_sessions(&e.session, seed.expect("checked seed"), e.replications).map_err(runtime)?;
            let mut tables = summarize_session(&results).map_err(runtime)?;
            if matches!(action, XpCommand::Run) {
                tables.insert(0, agents_table(&results));
                tables.insert(0, rounds_table(&results));
            }
            let agents: usize = results.iter().map(|r| r.agents.len()).sum();
            Ok((format!("{} sessions, {agents} agents simulated", results.len()), tables))
        }
    }
}

fn env_inspect(config: &RunConfig) -> Result<(String, Vec<Table>), CliError> {
    let cs = config.choice_set()?;
    let mut lotteries = Table::new("lotteries", &["id", "low", "high", "p", "value"]);
    for l in cs.lotteries() {
        match l.kind {
            LotteryKind::Risky(r) => lotteries.push(vec![
                l.id.to_string().into(),
                r.low.as_units_f64().into(),
                r.high.as_units_f64().into(),
                r.p.into(),
                Cell::Empty,
            ]),
            LotteryKind::Safe { value } => lotteries.push(vec![
                l.id.to_string().into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                value.as_units_f64().into(),
            ]),
        }
    }
    let space = build_state_space(cs).map_err(runtime)?;
    let mut states = Table::new("states", &["state", "successes", "probability"]);
    for (i, s) in space.states().iter().enumerate() {
        let label: String = (0..s.len).map(|j| if s.succeeded(j) { '1' } else { '0' }).collect();
        states.push(vec![i.into(), label.into(), s.prob.into()]);
    }
    let mut partitions = Table::new("partitions", &["component", "chosen", "block", "states"]);
    let info = config.info(cs)?;
    let components = info.components(cs).map_err(runtime)?;
    for (c, (_, obs)) in components.iter().enumerate() {
        let derived = InfoEnvironment::derive(cs, obs).map_err(runtime)?;
        for (chosen, part) in derived.partitions() {
            for (b, block) in part.blocks().iter().enumerate() {
                let members: Vec<String> = block.states.iter().map(usize::to_string).collect();
                partitions.push(vec![c.into(), chosen.to_string().into(), b.into(), members.join(" ").into()]);
            }
        }
    }
    Ok((format!("{} risky lotteries, {} states", cs.n(), space.len()), vec![lotteries, states, partitions]))
}

fn decide_eval(config: &RunConfig) -> Result<(String, Vec<Table>), CliError> {
    let cs = config.choice_set()?;
    let (pref, u) = config.preference()?;
    let info = config.info(cs)?;
    let best = optimal_choice(cs, &info, &pref, &u).map_err(runtime)?;
    let mut t = Table::new("evaluation", &["lottery", "choiceless_utility", "total_utility", "optimal"]);
    for id in cs.ids() {
        t.push(vec![
            id.to_string().into(),
            expected_choiceless_utility(id, &u, cs).map_err(runtime)?.into(),
            expected_total_utility(id, &info, &pref, &u, cs).map_err(runtime)?.into(),
            (id == best).into(),
        ]);
    }
    Ok((format!("optimal choice: {best}"), vec![t]))
}

fn q_sweep() -> Vec<f64> {
    (0..=10).map(|k| f64::from(k) / 10.0).collect()
}

/// The single risky lottery of the environment, or the standard elicitation lottery.
fn elicitation_task(config: &RunConfig) -> Result<BdmTask<f64>, CliError> {
    let mut task = BdmTask::standard();
    if let Some(cs) = &config.environment {
        let r = cs.risky()[0];
        task.p = r.p;
        task.low = r.low;
        task.safe = cs.safe_value();
    }
    if let Some(e) = &config.experiment {
        task.grid = e.session.grid.clone();
    }
    task.validate().map_err(|e| invalid("environment", e))?;
    Ok(task)
}

fn decide_threshold(config: &RunConfig) -> Result<(String, Vec<Table>), CliError> {
    let (pref, u) = config.preference()?;
    let task = elicitation_task(config)?;
    let mut t = Table::new("threshold", &["q", "threshold", "threshold_money"]);
    for q in q_sweep() {
        let h = risky_threshold(task.p, q, pref.regret).map_err(runtime)?;
        let money = threshold_in_money(&u, task.low, task.safe, h).map_err(runtime)?;
        t.push(vec![q.into(), h.into(), money.into()]);
    }
    Ok((format!("{} thresholds over q = 0..1", t.rows.len()), vec![t]))
}

fn decide_bdm(config: &RunConfig) -> Result<(String, Vec<Table>), CliError> {
    let (pref, u) = config.preference()?;
    let task = elicitation_task(config)?;
    let mut t = Table::new("bdm", &["q", "switches", "stated_threshold"]);
    for q in q_sweep() {
        let out = bdm_threshold(&pref, &u, &task, q).map_err(runtime)?;
        t.push(vec![q.into(), matches!(out, crate::decide::BdmOutcome::Switch(_)).into(), out.as_amount(&task).as_units_f64().into()]);
    }
    Ok((format!("{} stated thresholds over q = 0..1", t.rows.len()), vec![t]))
}

fn regime_label(r: crate::game::Regime) -> &'static str {
    match r {
        crate::game::Regime::DominantSafe => "DominantSafe",
        crate::game::Regime::DominantRisky => "DominantRisky",
        crate::game::Regime::Coordination => "Coordination",
    }
}

fn equilibria_table(game: &RegretGame<f64>) -> Result<Table, CliError> {
    let mut t = Table::new("equilibria", &["profile", "risky_count", "welfare"]);
    for profile in game.enumerate_pure_nash().map_err(runtime)? {
        let welfare = (0..game.n()).try_fold(0.0, |acc, i| game.expected_player_utility(&profile, i).map(|v| acc + v));
        t.push(vec![profile.to_string().into(), profile.risky_count().into(), welfare.map_err(runtime)?.into()]);
    }
    Ok(t)
}

fn game_command(action: GameCommand, config: &RunConfig) -> Result<(String, Vec<Table>), CliError> {
    if let GameCommand::Bayes = action {
        return game_bayes(config);
    }
    let game = config.game()?;
    match action {
        GameCommand::Classify => {
            let regime = game.classify_regime().map_err(invalid_or_runtime)?;
            let kappa = game.common_kappa().map_err(invalid_or_runtime)?;
            let mut t = Table::new(
                "regime",
                &["regime", "lower_threshold", "upper_threshold", "dominance_bound", "critical_q", "critical_q_clamped", "pareto"],
            );
            let crit = game.critical_q().ok();
            t.push(vec![
                regime_label(regime).into(),
                game.lower_threshold().into(),
                game.upper_threshold(kappa).into(),
                game.dominance_bound().into(),
                crit.map(|c| c.raw).into(),
                crit.map(|c| c.clamped).into(),
                format!("{:?}", game.pareto_compare().map_err(runtime)?).into(),
            ]);
            let eq = equilibria_table(&game)?;
            Ok((format!("{} ({} pure equilibria)", regime_label(regime), eq.rows.len()), vec![t, eq]))
        }
        GameCommand::Solve => {
            let eq = equilibria_table(&game)?;
            Ok((format!("{} pure equilibria", eq.rows.len()), vec![eq]))
        }
        GameCommand::Mixed => {
            let m = game.mixed_symmetric_equilibrium().map_err(runtime)?;
            let mut t = Table::new("mixed", &["sigma", "residual"]);
            t.push(vec![m.sigma.into(), m.residual.into()]);
            Ok((format!("sigma = {}", crate::report::round_sig9(m.sigma)), vec![t]))
        }
        GameCommand::Hetero => {
            let h = game.heterogeneous_pure_nash().map_err(invalid_or_runtime)?;
            let mut t = Table::new(
                "heterogeneous",
                &["m", "kappa", "q_star", "a_star", "a_star_is_nash", "criterion_holds", "all_risky_is_nash", "minimal_m"],
            );
            t.push(vec![
                h.m.into(),
                h.kappa.into(),
                h.q_star.into(),
                h.a_star.to_string().into(),
                h.a_star_is_nash.into(),
                h.criterion_holds.into(),
                h.all_risky_is_nash.into(),
                h.minimal_m.into(),
            ]);
            let summary = format!("a* = {} is {}an equilibrium", h.a_star, if h.a_star_is_nash { "" } else { "not " });
            Ok((summary, vec![t]))
        }
        GameCommand::Bayes => unreachable!(),
    }
}

fn invalid_or_runtime(e: crate::game::GameError) -> CliError {
    match e {
        crate::game::GameError::HeterogeneousKappas | crate::game::GameError::BadPartitionOfPlayers(_) => invalid("game.kappas", e),
        other => runtime(other),
    }
}

fn game_bayes(config: &RunConfig) -> Result<(String, Vec<Table>), CliError> {
    let g = RunConfig::section(&config.game, "game")?;
    let n = g.n.ok_or_else(|| invalid("game.n", "required for the private-type game"))?;
    let support = g.support.as_ref().ok_or_else(|| invalid("game.support", "required for the private-type game"))?;
    g.q.validate(n).map_err(|e| invalid("game.q", e))?;
    let template = GameTemplate { p: g.p, u_high: g.u_high, q: g.q.clone() };
    let report = bayesian_cutoff_equilibrium(&template, support, n).map_err(|e| invalid("game.support", e))?;
    let mut t = Table::new("cutoff_equilibria", &["cutoff", "risky_prob", "expected_q"]);
    for eq in &report.equilibria {
        let cutoff = match eq.cutoff {
            Cutoff::At(c) => Cell::float(c),
            Cutoff::AboveSupport => Cell::text("above_support"),
        };
        t.push(vec![cutoff, eq.risky_prob.into(), eq.expected_q.into()]);
    }
    Ok((format!("{} cutoff equilibria", t.rows.len()), vec![t]))
}

fn dynamics_command(
    action: DynamicsCommand,
    game: &RegretGame<f64>,
    cfg: &DynamicsConfig,
) -> Result<(String, Vec<Table>), CliError> {
    match action {
        DynamicsCommand::Run => {
            let runs = run_replications(game, cfg).map_err(runtime)?;
            let mut t = Table::new("trajectories", &["replication", "initial", "terminal", "terminal_risky_count", "absorbed_at"]);
            for (r, run) in runs.iter().enumerate() {
                t.push(vec![
                    r.into(),
                    run.initial.to_string().into(),
                    run.terminal.to_string().into(),
                    run.terminal.risky_count().into(),
                    run.absorbed_at.into(),
                ]);
            }
            let mut path = Table::new("path", &["replication", "step", "risky_count"]);
            for (r, run) in runs.iter().enumerate() {
                for (s, k) in run.risky_counts.iter().enumerate() {
                    path.push(vec![r.into(), s.into(), (*k).into()]);
                }
            }
            let absorbed = runs.iter().filter(|r| r.absorbed_at.is_some()).count();
            Ok((format!("{absorbed} of {} runs absorbed", runs.len()), vec![t, path]))
        }
        DynamicsCommand::Shares => {
            let s = long_run_shares(game, cfg).map_err(|e| invalid("dynamics", e))?;
            let mut t = Table::new("shares", &["outcome", "share", "standard_error"]);
            t.push(vec!["all_safe".into(), s.all_safe.into(), s.se_all_safe.into()]);
            t.push(vec!["all_risky".into(), s.all_risky.into(), s.se_all_risky.into()]);
            t.push(vec!["other".into(), s.other.into(), s.se_other.into()]);
            let mut h = Table::new("risky_count_histogram", &["risky_count", "replications"]);
            for (k, c) in s.risky_count_histogram.iter().enumerate() {
                h.push(vec![k.into(), (*c).into()]);
            }
            let summary = format!(
                "all-risky share {} over {} replications",
                crate::report::round_sig9(s.all_risky),
                s.replications
            );
            Ok((summary, vec![t, h]))
        }
    }
}

/// Runs one invocation; returns the summary line and the files written.
pub fn run(cli: &Cli) -> Result<(String, Vec<PathBuf>), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| invalid("--config", "a configuration file is required"))?;
    let bytes = fs::read(path).map_err(|e| invalid("--config", format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| invalid("--config", e))?;
    let config = RunConfig::parse(text)?;
    let seed = config.seed(&cli.command, cli.seed)?;
    let (summary, tables) = execute(&cli.command, &config, seed)?;
    let name = cli.command.name();
    let mut metadata = Metadata::new(&name, &bytes, seed);
    if matches!(cli.command, Command::Xp { .. }) {
        metadata.notes.push("partner-dependent thresholds use the believed partner lottery probability as the learning probability".into());
    }
    let report = Report { metadata, summary: summary.clone(), tables };
    let dir = cli.out.clone().or_else(|| config.output.directory.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let format = cli.format.or(config.output.format).unwrap_or(FormatArg::Csv);
    let written = report.write(Path::new(&dir), format.into()).map_err(|e| runtime(format!("writing {}: {e}", dir.display())))?;
    Ok((summary, written))
}

/// Entry point for the binary: parses arguments, runs, prints, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok((summary, _)) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
