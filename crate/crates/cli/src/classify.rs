//! The `classify` command: fill every missing cell of the run store.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use coltopic::backend::{Backend, CellKey, RequestMeta, RunRecord, RunStore};
use coltopic::promptgen::{build_prompt, PromptText};

use crate::config::CampaignConfig;
use crate::{CliError, Inputs};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassifySummary {
    pub planned: usize,
    pub skipped: usize,
    pub written: usize,
    pub failures: Vec<(CellKey, String)>,
}

struct Job {
    cell: CellKey,
    backend: usize,
    prompt: usize,
    headers: usize,
}

pub fn run(config: &CampaignConfig) -> Result<ClassifySummary, CliError> {
    config.validate()?;
    config.check_paths()?;
    let inputs = Inputs::load(config)?;
    let backends: Vec<Box<dyn Backend>> = config
        .backends
        .iter()
        .map(|b| b.build())
        .collect::<Result<_, _>>()?;

    let mut prompts: Vec<PromptText> = Vec::new();
    let mut prompt_index: BTreeMap<(usize, bool), usize> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (b, backend_config) in config.backends.iter().enumerate() {
        for (d, dataset) in inputs.corpus.datasets().iter().enumerate() {
            for with_context in config.contexts(backend_config) {
                let p = match prompt_index.get(&(d, with_context)) {
                    Some(&p) => p,
                    None => {
                        let prompt = build_prompt(dataset, &inputs.vocab, with_context)
                            .map_err(|e| CliError::invalid(e.to_string()))?;
                        prompts.push(prompt);
                        prompt_index.insert((d, with_context), prompts.len() - 1);
                        prompts.len() - 1
                    }
                };
                for run_index in 1..=config.runs {
                    jobs.push(Job {
                        cell: CellKey {
                            backend: backends[b].id().clone(),
                            dataset_id: dataset.id.clone(),
                            with_context,
                            run_index,
                        },
                        backend: b,
                        prompt: p,
                        headers: d,
                    });
                }
            }
        }
    }

    let store = RunStore::open(&config.store).map_err(|e| CliError::invalid(e.to_string()))?;
    let mut summary = ClassifySummary {
        planned: jobs.len(),
        ..ClassifySummary::default()
    };
    let pending: VecDeque<Job> = jobs
        .into_iter()
        .filter(|j| {
            let done = store.contains(&j.cell);
            summary.skipped += usize::from(done);
            !done
        })
        .collect();

    let queue = Mutex::new(pending);
    let store = Mutex::new(store);
    let outcome = Mutex::new((0usize, Vec::new()));
    let workers = config.parallelism.min(queue.lock().unwrap().len()).max(1);
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some(job) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let backend = &backends[job.backend];
                let result = backend
                    .classify(&job.cell, &prompts[job.prompt])
                    .map(|raw| {
                        let meta = RequestMeta {
                            timestamp_ms: backend.is_live().then(now_ms),
                            decoding: backend.decoding(),
                        };
                        let headers = &inputs.corpus.datasets()[job.headers].headers;
                        RunRecord::from_response(&job.cell, raw, headers, meta)
                    });
                let appended = result.map_err(|e| e.to_string()).and_then(|record| {
                    store
                        .lock()
                        .unwrap()
                        .append(&record)
                        .map_err(|e| e.to_string())
                });
                let mut outcome = outcome.lock().unwrap();
                match appended {
                    Ok(()) => outcome.0 += 1,
                    Err(e) => outcome.1.push((job.cell, e)),
                }
            });
        }
    });
    let (written, mut failures) = outcome.into_inner().unwrap();
    failures.sort();
    summary.written = written;
    summary.failures = failures;
    Ok(summary)
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
