//! The `evaluate` command: turn the run store into a report bundle.
//!
//! Every table is written from ordered maps and floats use the shortest
//! round-trip formatting, so the same store always gives the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use coltopic::backend::{load_runs, BackendId, RunRecord};
use coltopic::metrics::{
    alignment_table, consistency_table, group_sequences, hca, human_inputs, machine_inputs,
    pairwise_alignment, pairwise_consistency, Aggregation, AgreementInputs, AlignmentTable,
    ClassificationSequence, ConsistencyTable, MatchMode, ScoringScheme,
};
use coltopic::outcome::{tally_campaign, OutcomeLabel, OutcomeTally};
use coltopic::stats::{anova, tukey_hsd, AnovaResult, Observation, TukeyResult};

use crate::config::CampaignConfig;
use crate::{context_name, CliError, Inputs};

pub const TALLY_FILE: &str = "tally.csv";
pub const PROPORTIONS_FILE: &str = "proportions.csv";
pub const AGREEMENT_TABLE_FILE: &str = "agreement_table.csv";
pub const NOTICES_FILE: &str = "notices.txt";

/// Files of one report bundle, by name.
#[derive(Debug, Default)]
pub struct Bundle {
    pub files: BTreeMap<String, String>,
    pub notices: Vec<String>,
}

impl Bundle {
    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        self.files.insert(
            name.to_string(),
            String::from_utf8(bytes).expect("UTF-8 fields"),
        );
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out)
            .map_err(|e| CliError::invalid(format!("cannot create {}: {e}", out.display())))?;
        let mut notices = self.notices.join("\n");
        if !notices.is_empty() {
            notices.push('\n');
        }
        let all = self
            .files
            .iter()
            .map(|(n, b)| (n.as_str(), b))
            .chain(std::iter::once((NOTICES_FILE, &notices)));
        for (name, body) in all {
            let path = out.join(name);
            fs::write(&path, body)
                .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Shortest round-trip text; scientific outside [1e-4, 1e16).
pub(crate) fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn ctx_suffix(with_context: bool) -> &'static str {
    if with_context {
        "with_context"
    } else {
        "no_context"
    }
}

pub fn run(config: &CampaignConfig, backends: &[String]) -> Result<Bundle, CliError> {
    config.validate()?;
    config.check_paths()?;
    let inputs = Inputs::load(config)?;
    let mut runs = load_runs(&config.store).map_err(|e| CliError::invalid(e.to_string()))?;
    if !backends.is_empty() {
        runs.retain(|r| backends.iter().any(|b| b == r.backend.as_str()));
    }
    if runs.is_empty() {
        return Err(CliError::invalid(format!(
            "run store {} holds no runs to evaluate",
            config.store.display()
        )));
    }
    build(config, &inputs, &runs)
}

/// Computes the full bundle from already-loaded inputs and runs.
pub fn build(
    config: &CampaignConfig,
    inputs: &Inputs,
    runs: &[RunRecord],
) -> Result<Bundle, CliError> {
    let scheme = config.scoring()?;
    let mut bundle = Bundle::default();

    let failed = runs.iter().filter(|r| r.is_failed()).count();
    if failed > 0 {
        bundle.notices.push(format!(
            "{failed} run(s) failed to parse; their headers count as unassigned"
        ));
    }

    let tally = tally_campaign(&inputs.vocab, &inputs.corpus, runs)
        .map_err(|e| CliError::invalid(e.to_string()))?;
    write_tally(&mut bundle, &tally);

    let consistency = consistency_table(&inputs.vocab, runs, &scheme)
        .map_err(|e| CliError::invalid(e.to_string()))?;
    for (backend, dataset, ctx) in &consistency.skipped {
        bundle.notices.push(format!(
            "consistency skipped for {backend}/{dataset}/{}: fewer than two runs",
            context_name(*ctx)
        ));
    }
    write_consistency(&mut bundle, &consistency);

    let alignment = alignment_table(&inputs.vocab, runs, &scheme)
        .map_err(|e| CliError::invalid(e.to_string()))?;
    write_alignment(&mut bundle, &alignment);

    match &config.human_labels {
        None => bundle
            .notices
            .push("no human labels configured; agreement tables omitted".to_string()),
        Some(path) => {
            let labels = inputs.human_labels(path)?;
            for u in &labels.unresolved {
                bundle.notices.push(format!(
                    "human label on line {} (`{}`) does not resolve and was skipped",
                    u.line, u.topic
                ));
            }
            for key in labels.dangling(&inputs.corpus) {
                bundle.notices.push(format!(
                    "human label for {}/{} names no header in the corpus",
                    key.dataset, key.header
                ));
            }
            write_agreement(&mut bundle, inputs, runs, &labels)?;
        }
    }

    let groups = group_sequences(&inputs.vocab, runs);
    let contexts: BTreeSet<bool> = runs.iter().map(|r| r.with_context).collect();
    for &ctx in &contexts {
        consistency_stats(&mut bundle, &groups, &scheme, ctx, config.alpha)?;
        alignment_stats(&mut bundle, &groups, &scheme, ctx, config.alpha)?;
        label_stats(&mut bundle, &tally, ctx, config.alpha);
    }
    Ok(bundle)
}

fn write_tally(bundle: &mut Bundle, tally: &OutcomeTally) {
    let labels: Vec<&str> = OutcomeLabel::ALL.iter().map(|l| l.as_str()).collect();
    let mut header = vec!["backend", "dataset", "context", "run"];
    header.extend(&labels);
    let rows = tally
        .per_run
        .iter()
        .map(|(k, counts)| {
            let mut row = vec![
                k.backend.to_string(),
                k.dataset_id.clone(),
                context_name(k.with_context).to_string(),
                k.run_index.to_string(),
            ];
            row.extend(counts.0.iter().map(|c| c.to_string()));
            row
        })
        .collect();
    bundle.table(TALLY_FILE, &header, rows);

    let mut header = vec!["backend", "context", "run"];
    header.extend(&labels);
    let rows = tally
        .proportions
        .iter()
        .map(|(k, shares)| {
            let mut row = vec![
                k.backend.to_string(),
                context_name(k.with_context).to_string(),
                k.run_index.to_string(),
            ];
            row.extend(shares.iter().map(|&p| num(p)));
            row
        })
        .collect();
    bundle.table(PROPORTIONS_FILE, &header, rows);
}

fn write_consistency(bundle: &mut Bundle, table: &ConsistencyTable) {
    let mut rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .map(|((b, d, ctx), v)| vec![b.to_string(), d.clone(), context_name(*ctx).into(), num(*v)])
        .collect();
    rows.extend(table.overall.iter().map(|((b, ctx), v)| {
        vec![
            b.to_string(),
            "ALL".into(),
            context_name(*ctx).into(),
            num(*v),
        ]
    }));
    bundle.table(
        "consistency.csv",
        &["backend", "dataset", "context", "consistency"],
        rows,
    );
}

fn write_alignment(bundle: &mut Bundle, table: &AlignmentTable) {
    let mut rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .map(|((a, b, d, ctx), v)| {
            vec![
                a.to_string(),
                b.to_string(),
                d.clone(),
                context_name(*ctx).into(),
                num(*v),
            ]
        })
        .collect();
    rows.extend(table.overall.iter().map(|((a, b, ctx), v)| {
        vec![
            a.to_string(),
            b.to_string(),
            "ALL".into(),
            context_name(*ctx).into(),
            num(*v),
        ]
    }));
    bundle.table(
        "alignment.csv",
        &["backend_a", "backend_b", "dataset", "context", "alignment"],
        rows,
    );
}

fn write_agreement(
    bundle: &mut Bundle,
    inputs: &Inputs,
    runs: &[RunRecord],
    labels: &coltopic::HumanLabels,
) -> Result<(), CliError> {
    let mut groups: BTreeMap<(&BackendId, bool), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((&r.backend, r.with_context))
            .or_default()
            .push(r);
    }
    let backends: BTreeSet<&BackendId> = runs.iter().map(|r| &r.backend).collect();
    let modes = [MatchMode::Exact, MatchMode::Close];
    let humans: Vec<AgreementInputs> = modes
        .iter()
        .map(|&m| restrict(human_inputs(&inputs.vocab, labels, m), inputs))
        .collect();
    if humans[0].per_header.is_empty() {
        bundle
            .notices
            .push("no usable human labels; agreement tables omitted".to_string());
        return Ok(());
    }

    let mut rows = Vec::new();
    let mut cells: BTreeMap<(&BackendId, bool, MatchMode), f64> = BTreeMap::new();
    for (&(backend, ctx), group) in &groups {
        for (mode, human) in modes.iter().zip(&humans) {
            let machine = machine_inputs(&inputs.vocab, &inputs.corpus, group, *mode)
                .map_err(|e| CliError::invalid(e.to_string()))?;
            let result = match hca(human, &machine, Aggregation::PerHeader) {
                Ok(r) => r,
                Err(e) => {
                    bundle.notices.push(format!(
                        "agreement for {backend}/{} ({}) not computed: {e}",
                        context_name(ctx),
                        mode.as_str()
                    ));
                    continue;
                }
            };
            let prefix = [
                backend.to_string(),
                context_name(ctx).into(),
                mode.as_str().into(),
            ];
            for ((dataset, header), v) in &result.per_header {
                let mut row = prefix.to_vec();
                row.extend([dataset.clone(), header.clone(), num(*v)]);
                rows.push(row);
            }
            if let Some(aggregate) = result.aggregate {
                let mut row = prefix.to_vec();
                row.extend(["ALL".into(), "ALL".into(), num(aggregate)]);
                rows.push(row);
                cells.insert((backend, ctx, *mode), aggregate);
            }
        }
    }
    bundle.table(
        "agreement.csv",
        &[
            "backend",
            "context",
            "mode",
            "dataset",
            "header",
            "agreement",
        ],
        rows,
    );

    let columns = [
        (false, MatchMode::Exact),
        (false, MatchMode::Close),
        (true, MatchMode::Exact),
        (true, MatchMode::Close),
    ];
    let rows = backends
        .iter()
        .map(|&b| {
            let mut row = vec![b.to_string()];
            row.extend(columns.iter().map(|&(ctx, mode)| {
                cells
                    .get(&(b, ctx, mode))
                    .map_or_else(|| "X".to_string(), |v| num(*v))
            }));
            row
        })
        .collect();
    bundle.table(
        AGREEMENT_TABLE_FILE,
        &[
            "backend",
            "no_context_exact",
            "no_context_close",
            "with_context_exact",
            "with_context_close",
        ],
        rows,
    );
    Ok(())
}

/// Keeps only human-labelled headers that exist in the corpus.
fn restrict(mut inputs: AgreementInputs, corpus: &Inputs) -> AgreementInputs {
    inputs.per_header.retain(|(d, h), _| {
        corpus
            .corpus
            .get(d)
            .and_then(|ds| ds.header_index(h))
            .is_some()
    });
    inputs
}

fn anova_rows(result: &AnovaResult) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                num(r.sum_sq),
                num(r.df),
                num(r.mean_sq),
                num(r.f),
                num(r.p),
            ]
        })
        .collect();
    rows.push(vec![
        "residual".into(),
        num(result.residual_sum_sq),
        num(result.residual_df),
        num(result.residual_mean_sq()),
        String::new(),
        String::new(),
    ]);
    rows
}

const ANOVA_HEADER: [&str; 6] = ["source", "sum_sq", "df", "mean_sq", "F", "p"];
const TUKEY_HEADER: [&str; 6] = ["group_a", "group_b", "mean_diff", "q", "p_adj", "reject"];

fn tukey_rows(result: &TukeyResult) -> Vec<Vec<String>> {
    result
        .pairs
        .iter()
        .map(|p| {
            vec![
                p.level_a.clone(),
                p.level_b.clone(),
                num(p.mean_diff),
                num(p.q),
                num(p.p_adj),
                p.significant.to_string(),
            ]
        })
        .collect()
}

fn run_tests(
    bundle: &mut Bundle,
    what: &str,
    ctx: bool,
    observations: &[Observation],
    factors: &[&str],
    alpha: f64,
) {
    let suffix = ctx_suffix(ctx);
    match anova(observations, factors) {
        Ok(result) => {
            for w in &result.warnings {
                bundle
                    .notices
                    .push(format!("anova {what} {}: {w}", context_name(ctx)));
            }
            bundle.table(
                &format!("anova_{what}_{suffix}.csv"),
                &ANOVA_HEADER,
                anova_rows(&result),
            );
        }
        Err(e) => bundle.notices.push(format!(
            "anova {what} {} not computed: {e}",
            context_name(ctx)
        )),
    }
    match tukey_hsd(observations, factors[0], alpha) {
        Ok(result) => {
            for w in &result.warnings {
                bundle
                    .notices
                    .push(format!("tukey {what} {}: {w}", context_name(ctx)));
            }
            bundle.table(
                &format!("tukey_{what}_{suffix}.csv"),
                &TUKEY_HEADER,
                tukey_rows(&result),
            );
        }
        Err(e) => bundle.notices.push(format!(
            "tukey {what} {} not computed: {e}",
            context_name(ctx)
        )),
    }
}

type Groups = BTreeMap<(BackendId, String, bool), Vec<ClassificationSequence>>;

/// One observation per pair of runs, factors model and dataset.
fn consistency_stats(
    bundle: &mut Bundle,
    groups: &Groups,
    scheme: &ScoringScheme,
    ctx: bool,
    alpha: f64,
) -> Result<(), CliError> {
    let mut obs = Vec::new();
    for ((b, d, c), seqs) in groups {
        if *c != ctx {
            continue;
        }
        let scores =
            pairwise_consistency(seqs, scheme).map_err(|e| CliError::invalid(e.to_string()))?;
        obs.extend(
            scores
                .into_iter()
                .map(|v| Observation::new(v, [("model", b.as_str()), ("dataset", d.as_str())])),
        );
    }
    run_tests(
        bundle,
        "consistency",
        ctx,
        &obs,
        &["model", "dataset"],
        alpha,
    );
    Ok(())
}

/// One observation per cross-backend pair of runs, factors pair and dataset.
/// With a single backend pair only the dataset effect is tested.
fn alignment_stats(
    bundle: &mut Bundle,
    groups: &Groups,
    scheme: &ScoringScheme,
    ctx: bool,
    alpha: f64,
) -> Result<(), CliError> {
    let mut obs = Vec::new();
    let mut pairs = BTreeSet::new();
    for ((a, d, c), seqs_a) in groups {
        if *c != ctx {
            continue;
        }
        for ((b, d2, c2), seqs_b) in groups.range((a.clone(), d.clone(), ctx)..) {
            if b == a || d2 != d || *c2 != ctx {
                continue;
            }
            let pair = format!("{a}-{b}");
            let scores = pairwise_alignment(seqs_a, seqs_b, scheme)
                .map_err(|e| CliError::invalid(e.to_string()))?;
            obs.extend(
                scores.into_iter().map(|v| {
                    Observation::new(v, [("pair", pair.as_str()), ("dataset", d.as_str())])
                }),
            );
            pairs.insert(pair);
        }
    }
    match pairs.len() {
        0 => {}
        1 => match anova(&obs, &["dataset"]) {
            Ok(result) => {
                for w in &result.warnings {
                    bundle
                        .notices
                        .push(format!("anova alignment {}: {w}", context_name(ctx)));
                }
                let name = format!("anova_alignment_{}.csv", ctx_suffix(ctx));
                bundle.table(&name, &ANOVA_HEADER, anova_rows(&result));
            }
            Err(e) => bundle.notices.push(format!(
                "anova alignment {} not computed: {e}",
                context_name(ctx)
            )),
        },
        _ => run_tests(bundle, "alignment", ctx, &obs, &["pair", "dataset"], alpha),
    }
    Ok(())
}

fn label_stats(bundle: &mut Bundle, tally: &OutcomeTally, ctx: bool, alpha: f64) {
    let mut rows = Vec::new();
    for label in OutcomeLabel::ALL {
        let obs: Vec<Observation> = tally
            .proportions
            .iter()
            .filter(|(k, _)| k.with_context == ctx)
            .map(|(k, shares)| {
                Observation::new(shares[label as usize], [("model", k.backend.as_str())])
            })
            .collect();
        match tukey_hsd(&obs, "model", alpha) {
            Ok(result) => {
                for w in &result.warnings {
                    bundle
                        .notices
                        .push(format!("tukey {label} {}: {w}", context_name(ctx)));
                }
                for mut row in tukey_rows(&result) {
                    row.insert(0, label.to_string());
                    rows.push(row);
                }
            }
            Err(e) => bundle.notices.push(format!(
                "tukey {label} {} not computed: {e}",
                context_name(ctx)
            )),
        }
    }
    if !rows.is_empty() {
        let mut header = vec!["label"];
        header.extend(TUKEY_HEADER);
        bundle.table(
            &format!("tukey_labels_{}.csv", ctx_suffix(ctx)),
            &header,
            rows,
        );
    }
}
