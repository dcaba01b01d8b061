use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use driverchain::chain::{estimate_chain, estimate_second_order, ChainModel};
use driverchain::ingest::{parse_files, to_state_sequences, Dataset, StateSequence};
use driverchain::prism::{export_dtmc, export_properties, self_check};
use driverchain::published::{PercentChain, STUDY_N};
use driverchain::recover::{recover_chain, recover_counts};
use driverchain::report::{chain_to_json, initial_csv, transitions_csv, ChainDocument, SecondOrderDocument};
use driverchain::simulate::{empirical_marginals, propagate, sample, write_trajectories_csv};
use driverchain::stats::{compare_groups, test_homogeneity, test_order, test_stationarity, TestResult};
use driverchain::types::{Environment, InfoLevel, InteractionTrace, ScenarioConfig, Sex};

use crate::bundle::ReportBundle;

#[derive(Debug, Parser)]
#[command(name = "driverchain", version, about = "Driver-state Markov chain pipeline")]
pub struct Cli {
    /// Scenario config JSON; the bundled config when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output directory (simulate also accepts a .csv file).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate trace files and write the accepted traces.
    Ingest(IngestArgs),
    /// Fit chains per group.
    Estimate(EstimateArgs),
    /// Run a chi-square test.
    Test(TestArgs),
    /// Sample trajectories from a fitted chain.
    Simulate(SimulateArgs),
    /// Write a model-checker DTMC and property file.
    ExportPrism(ExportArgs),
    /// Recover integer counts from percentage tables.
    RecoverCounts(RecoverArgs),
    /// Host the session collection endpoint.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Extra copy of the rejection report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "environment", value_delimiter = ',')]
    pub group_by: Vec<GroupField>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum GroupField {
    Environment,
    Sex,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKindArg {
    Compare,
    Stationarity,
    Homogeneity,
    Order,
}

impl TestKindArg {
    fn name(self) -> &'static str {
        match self {
            TestKindArg::Compare => "compare",
            TestKindArg::Stationarity => "stationarity",
            TestKindArg::Homogeneity => "homogeneity",
            TestKindArg::Order => "order",
        }
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub kind: TestKindArg,
    /// Chain JSON files or trace files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "environment", value_delimiter = ',')]
    pub group_by: Vec<GroupField>,
    /// Environment to use when not grouping by environment.
    #[arg(long)]
    pub environment: Option<Environment>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub chain: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long, default_value_t = STUDY_N)]
    pub n: u64,
    /// JSON `{"rows": [[...]], "totals": [...]}`; the published tables when omitted.
    #[arg(long)]
    pub percents: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session directory; defaults to --out.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Built UI bundle served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        None => Ok(ScenarioConfig::bundled()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ScenarioConfig::from_json(&text)?)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let config_text = serde_json::to_string(&config)?;
    let ctx = RunContext {
        config,
        config_text,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Estimate(a) => estimate(&ctx, a),
        Command::Test(a) => test(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::ExportPrism(a) => export_prism(&ctx, a),
        Command::RecoverCounts(a) => recover(&ctx, a),
        Command::Serve(a) => {
            let dir = a.dir.unwrap_or(ctx.out);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::server::run(ctx.config, &dir, a.addr, a.static_dir))
        }
    }
}

struct RunContext {
    config: ScenarioConfig,
    config_text: String,
    seed: u64,
    out: PathBuf,
}

impl RunContext {
    fn bundle(&self, command: &str, seed: Option<u64>, inputs: &[PathBuf]) -> Result<ReportBundle> {
        let mut b = ReportBundle::new(&self.out, command, seed, &self.config_text);
        for p in inputs {
            b.record_input(p)?;
        }
        Ok(b)
    }
}

fn load_dataset(ctx: &RunContext, inputs: &[PathBuf]) -> Result<Dataset> {
    Ok(parse_files(inputs, &ctx.config)?)
}

fn ingest(ctx: &RunContext, args: IngestArgs) -> Result<()> {
    let dataset = load_dataset(ctx, &args.input)?;
    let rejections = &dataset.provenance.rejections;
    eprintln!("{} accepted, {} rejected", dataset.len(), rejections.len());
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(rejections)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if dataset.is_empty() {
        bail!("no valid traces in input");
    }
    let mut bundle = ctx.bundle("ingest", None, &args.input)?;
    bundle.add("traces.jsonl", dataset.to_jsonl());
    bundle.add_json("rejects.json", rejections);
    bundle.write()?;
    Ok(())
}

fn sex_label(s: Sex) -> &'static str {
    match s {
        Sex::Female => "female",
        Sex::Male => "male",
    }
}

fn info_label(i: InfoLevel) -> &'static str {
    match i {
        InfoLevel::High => "high",
        InfoLevel::Low => "low",
    }
}

/// State sequences keyed by label such as `highway-female-high`.
fn group_sequences(
    dataset: &Dataset,
    fields: &[GroupField],
    environment: Option<Environment>,
) -> Result<BTreeMap<String, Vec<StateSequence>>> {
    let envs: Vec<Environment> = if fields.contains(&GroupField::Environment) {
        Environment::ALL.to_vec()
    } else {
        vec![environment.ok_or_else(|| anyhow!("--environment is required unless grouping by environment"))?]
    };
    let key = |t: &InteractionTrace| {
        let mut parts = Vec::new();
        if fields.contains(&GroupField::Sex) {
            parts.push(sex_label(t.profile.sex));
        }
        if fields.contains(&GroupField::Info) {
            parts.push(info_label(t.condition.info_level));
        }
        parts
    };
    let mut buckets: BTreeMap<Vec<&str>, Vec<InteractionTrace>> = BTreeMap::new();
    for t in &dataset.traces {
        buckets.entry(key(t)).or_default().push(t.clone());
    }
    let mut out = BTreeMap::new();
    for env in envs {
        for (parts, traces) in &buckets {
            let subset = Dataset {
                traces: traces.clone(),
                provenance: Default::default(),
            };
            let mut label = vec![env.as_str()];
            label.extend(parts);
            out.insert(label.join("-"), to_state_sequences(&subset, env)?);
        }
    }
    Ok(out)
}

fn estimate(ctx: &RunContext, args: EstimateArgs) -> Result<()> {
    if !args.group_by.contains(&GroupField::Environment) {
        bail!("--group-by must include environment");
    }
    let dataset = load_dataset(ctx, &args.input)?;
    if dataset.is_empty() {
        bail!("no valid traces in input");
    }
    let mut bundle = ctx.bundle("estimate", None, &args.input)?;
    for (label, seqs) in group_sequences(&dataset, &args.group_by, None)? {
        let chain = estimate_chain(&seqs)?.with_label(&label).with_alpha(args.alpha)?;
        bundle.add(format!("{label}.json"), chain_to_json(&chain) + "\n");
        bundle.add(format!("{label}_initial.csv"), initial_csv(&chain));
        bundle.add(format!("{label}_transitions.csv"), transitions_csv(&chain));
        let marginals = match propagate(&chain) {
            Ok(m) => serde_json::json!({ "label": label, "marginals": m }),
            Err(e) => serde_json::json!({ "label": label, "error": e.to_string() }),
        };
        bundle.add_json(format!("{label}_marginals.json"), &marginals);
        if args.order == 2 {
            let model = estimate_second_order(&seqs)?;
            bundle.add_json(format!("{label}_order2.json"), &SecondOrderDocument::from_model(&label, &model));
        }
        eprintln!("{label}: n = {}", chain.n());
    }
    bundle.write()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LabeledResult {
    groups: Vec<String>,
    result: TestResult,
}

fn is_chain_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn load_chains(paths: &[PathBuf]) -> Result<Vec<ChainModel>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Box<ChainDocument>),
        Many(Vec<ChainDocument>),
    }
    let mut chains = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let docs = match serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))? {
            OneOrMany::One(d) => vec![*d],
            OneOrMany::Many(d) => d,
        };
        for d in docs {
            chains.push(d.to_chain()?);
        }
    }
    Ok(chains)
}

fn test(ctx: &RunContext, args: TestArgs) -> Result<()> {
    let chains: Vec<ChainModel> = if args.input.iter().all(|p| is_chain_file(p)) {
        if args.kind == TestKindArg::Order {
            bail!("the order test needs state sequences; pass trace files");
        }
        load_chains(&args.input)?
    } else if args.input.iter().any(|p| is_chain_file(p)) {
        bail!("mixing chain JSON and trace files is not supported");
    } else {
        let dataset = load_dataset(ctx, &args.input)?;
        if dataset.is_empty() {
            bail!("no valid traces in input");
        }
        let groups = group_sequences(&dataset, &args.group_by, args.environment)?;
        if args.kind == TestKindArg::Order {
            let mut results = Vec::new();
            for (label, seqs) in groups {
                results.push(LabeledResult {
                    groups: vec![label],
                    result: test_order(&seqs)?,
                });
            }
            return write_results(ctx, &args, results);
        }
        groups
            .into_iter()
            .filter(|(_, seqs)| !seqs.is_empty())
            .map(|(label, seqs)| Ok(estimate_chain(&seqs)?.with_label(label)))
            .collect::<Result<_>>()?
    };

    let labels: Vec<String> = chains.iter().map(|c| c.label().to_string()).collect();
    let results = match args.kind {
        TestKindArg::Compare => {
            let [a, b] = chains.as_slice() else {
                bail!("compare needs exactly two groups, got {}: {labels:?}", chains.len());
            };
            vec![LabeledResult {
                groups: labels.clone(),
                result: compare_groups(&a.step_counts(), &b.step_counts())?,
            }]
        }
        TestKindArg::Homogeneity => {
            let subgroups: Vec<_> = chains
                .iter()
                .map(|c| (c.label().to_string(), c.step_counts().to_vec()))
                .collect();
            vec![LabeledResult {
                groups: labels.clone(),
                result: test_homogeneity(&subgroups)?,
            }]
        }
        TestKindArg::Stationarity => chains
            .iter()
            .map(|c| {
                Ok(LabeledResult {
                    groups: vec![c.label().to_string()],
                    result: test_stationarity(c)?,
                })
            })
            .collect::<Result<_>>()?,
        TestKindArg::Order => unreachable!("handled above"),
    };
    write_results(ctx, &args, results)
}

fn write_results(ctx: &RunContext, args: &TestArgs, results: Vec<LabeledResult>) -> Result<()> {
    for r in &results {
        println!("[{}]", r.groups.join(" vs "));
        print!("{}", r.result.render());
    }
    let mut bundle = ctx.bundle("test", None, &args.input)?;
    bundle.add_json(format!("test_{}.json", args.kind.name()), &results);
    bundle.write()?;
    Ok(())
}

fn load_chain(path: &Path) -> Result<ChainModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    driverchain::report::chain_from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn simulate(ctx: &RunContext, args: SimulateArgs) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let trajectories = sample(&chain, args.n, ctx.seed)?;
    let mut csv = Vec::new();
    write_trajectories_csv(&trajectories, &mut csv)?;
    if ctx.out.extension().is_some_and(|e| e == "csv") {
        if let Some(parent) = ctx.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&ctx.out, csv).with_context(|| format!("writing {}", ctx.out.display()))?;
        return Ok(());
    }
    let mut bundle = ctx.bundle("simulate", Some(ctx.seed), std::slice::from_ref(&args.chain))?;
    bundle.add("trajectories.csv", csv);
    bundle.add_json(
        "marginals.json",
        &serde_json::json!({
            "exact": propagate(&chain)?,
            "empirical": empirical_marginals(&trajectories),
        }),
    );
    bundle.write()?;
    Ok(())
}

fn export_prism(ctx: &RunContext, args: ExportArgs) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let label = chain.label().to_string();
    let model = export_dtmc(&chain)?;
    let report = self_check(&model, &chain)?;
    let mut bundle = ctx.bundle("export-prism", None, std::slice::from_ref(&args.chain))?;
    bundle.add(format!("{label}.pm"), model);
    bundle.add(format!("{label}.pctl"), export_properties(&chain));
    bundle.add_json(format!("{label}_check.json"), &report);
    bundle.write()?;
    if !report.passed() {
        bail!("self-check failed: {}", serde_json::to_string(&report)?);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PercentRows {
    rows: Vec<Vec<f64>>,
    totals: Vec<u64>,
}

fn recover(ctx: &RunContext, args: RecoverArgs) -> Result<()> {
    let mut inputs = Vec::new();
    inputs.extend(args.percents.clone());
    let mut bundle = ctx.bundle("recover-counts", None, &inputs)?;
    if let Some(path) = &args.percents {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: PercentRows = serde_json::from_str(&text)?;
        let counts = recover_counts(&table.rows, &table.totals)?;
        bundle.add_json("counts.json", &serde_json::json!({ "counts": counts }));
    } else {
        for env in Environment::ALL {
            let recovered = recover_chain(&PercentChain::for_environment(env), args.n)?;
            for note in &recovered.approximated {
                eprintln!("approximated: {note}");
            }
            let chain = recovered.to_chain(env.as_str())?;
            bundle.add_json(format!("recovered_{env}.json"), &recovered);
            bundle.add(format!("{env}.json"), chain_to_json(&chain) + "\n");
            bundle.add(format!("{env}_initial.csv"), initial_csv(&chain));
            bundle.add(format!("{env}_transitions.csv"), transitions_csv(&chain));
        }
    }
    bundle.write()?;
    Ok(())
}
