use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::EvalError;
use crate::graph::{Graph, InteractionEvent};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// One global cut: events at or before `cut_ts` train, the rest test.
    #[default]
    SingleCut,
    /// Per sampled user, a random moment just before one of their actions;
    /// everything after it (for all users) is hidden via the `as_of` bound.
    RandomTime,
}

/// Which of a user's test interactions count as prediction targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldoutPolicy {
    /// Only items the user had not used before the cut. Items already
    /// linked are also removed from the ranked list before scoring.
    #[default]
    NewItems,
    /// Every distinct item used after the cut, re-used items included.
    AllItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub cut_ts: i64,
    pub sample_size: usize,
    pub seed: u64,
    pub repetitions: usize,
    #[serde(default)]
    pub mode: SplitMode,
    #[serde(default)]
    pub heldout: HeldoutPolicy,
}

/// One prediction task: rank for `user` as of `as_of`, score against `heldout`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub user: String,
    pub as_of: Option<i64>,
    pub heldout: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Graph,
    /// Events the train graph was built from, kept for time-window rebuilds.
    pub train_events: Vec<InteractionEvent>,
    pub test_events: usize,
    pub heldout_policy: HeldoutPolicy,
    /// Sampled cases, one list per repetition.
    pub samples: Vec<Vec<EvalCase>>,
}

fn repetition_rng(seed: u64, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repetition as u64);
    rng
}

pub fn split_and_sample(events: &[InteractionEvent], spec: &SplitSpec) -> Result<Split, EvalError> {
    let valid: Vec<&InteractionEvent> = events.iter().filter(|e| e.validate().is_ok()).collect();
    if valid.is_empty() {
        return Err(EvalError::Empty("split_and_sample"));
    }
    if spec.sample_size == 0 || spec.repetitions == 0 {
        return Err(EvalError::Empty("sample_size and repetitions"));
    }
    match spec.mode {
        SplitMode::SingleCut => single_cut(&valid, spec),
        SplitMode::RandomTime => random_time(&valid, spec),
    }
}

fn single_cut(events: &[&InteractionEvent], spec: &SplitSpec) -> Result<Split, EvalError> {
    let min = events.iter().map(|e| e.ts).min().expect("non-empty");
    let max = events.iter().map(|e| e.ts).max().expect("non-empty");
    if spec.cut_ts < min || spec.cut_ts > max {
        return Err(EvalError::CutOutOfRange {
            cut: spec.cut_ts,
            min,
            max,
        });
    }
    let (train_events, test_events): (Vec<InteractionEvent>, Vec<InteractionEvent>) = events
        .iter()
        .map(|e| (*e).clone())
        .partition(|e| e.ts <= spec.cut_ts);

    let mut linked: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &train_events {
        linked.entry(&e.user).or_default().insert(&e.item);
    }
    let mut heldout: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for e in &test_events {
        let already = linked.get(e.user.as_str()).is_some_and(|s| s.contains(e.item.as_str()));
        let target = heldout.entry(e.user.clone()).or_default();
        if spec.heldout == HeldoutPolicy::AllItems || !already {
            target.insert(e.item.clone());
        }
    }
    let all_users: BTreeSet<&str> = events.iter().map(|e| e.user.as_str()).collect();
    let eligible: Vec<(&String, &BTreeSet<String>)> =
        heldout.iter().filter(|(_, items)| !items.is_empty()).collect();
    let excluded = all_users.len() - eligible.len();
    if excluded > 0 {
        info!(excluded, "users without held-out items left out of sampling");
    }
    if eligible.len() < spec.sample_size {
        return Err(EvalError::InsufficientUsers {
            eligible: eligible.len(),
            requested: spec.sample_size,
        });
    }

    let samples = (0..spec.repetitions)
        .map(|rep| {
            let mut rng = repetition_rng(spec.seed, rep);
            let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), spec.sample_size).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|i| EvalCase {
                    user: eligible[i].0.clone(),
                    as_of: None,
                    heldout: eligible[i].1.clone(),
                })
                .collect()
        })
        .collect();

    let mut train = Graph::new();
    train.batch_import(train_events.iter().cloned());
    Ok(Split {
        train,
        train_events,
        test_events: test_events.len(),
        heldout_policy: spec.heldout,
        samples,
    })
}

fn random_time(events: &[&InteractionEvent], spec: &SplitSpec) -> Result<Split, EvalError> {
    let mut per_user: BTreeMap<&str, Vec<&InteractionEvent>> = BTreeMap::new();
    for e in events {
        per_user.entry(&e.user).or_default().push(e);
    }
    for list in per_user.values_mut() {
        list.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.item.cmp(&b.item)));
    }
    // a user needs an action strictly after their first timestamp
    let candidates: Vec<&str> = per_user
        .iter()
        .filter(|(_, list)| list.last().map(|e| e.ts) > list.first().map(|e| e.ts))
        .map(|(u, _)| *u)
        .collect();

    let mut samples = Vec::with_capacity(spec.repetitions);
    for rep in 0..spec.repetitions {
        let mut rng = repetition_rng(spec.seed, rep);
        let mut order = candidates.clone();
        order.shuffle(&mut rng);
        let mut cases = Vec::with_capacity(spec.sample_size);
        let mut resampled = 0usize;
        for user in order {
            if cases.len() == spec.sample_size {
                break;
            }
            let list = &per_user[user];
            let first_ts = list[0].ts;
            let later: Vec<&&InteractionEvent> = list.iter().filter(|e| e.ts > first_ts).collect();
            let moment = later[rng.random_range(0..later.len())].ts;
            let as_of = moment - 1;
            let before: BTreeSet<&str> = list
                .iter()
                .filter(|e| e.ts <= as_of)
                .map(|e| e.item.as_str())
                .collect();
            let heldout: BTreeSet<String> = list
                .iter()
                .filter(|e| e.ts >= moment)
                .filter(|e| spec.heldout == HeldoutPolicy::AllItems || !before.contains(e.item.as_str()))
                .map(|e| e.item.clone())
                .collect();
            if heldout.is_empty() {
                resampled += 1;
                continue;
            }
            cases.push(EvalCase {
                user: user.to_owned(),
                as_of: Some(as_of),
                heldout,
            });
        }
        if resampled > 0 {
            info!(resampled, repetition = rep, "resampled users with empty held-out sets");
        }
        if cases.len() < spec.sample_size {
            return Err(EvalError::InsufficientUsers {
                eligible: cases.len(),
                requested: spec.sample_size,
            });
        }
        cases.sort_by(|a, b| a.user.cmp(&b.user));
        samples.push(cases);
    }

    let train_events: Vec<InteractionEvent> = events.iter().map(|e| (*e).clone()).collect();
    let mut train = Graph::new();
    train.batch_import(train_events.iter().cloned());
    Ok(Split {
        train,
        train_events,
        test_events: 0,
        heldout_policy: spec.heldout,
        samples,
    })
}
