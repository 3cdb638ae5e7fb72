//! Search for the fewest preemption classes that make a flow set schedulable.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, AnalysisOptions, SCHEMA_VERSION};
use crate::config::{PreemptionConfig, PriorityRanks};
use crate::error::{Error, Result};
use crate::network::{Flow, Network, Routes};

/// Every valid configuration at `level` for `priorities` distinct priorities,
/// in lexicographic order of their entries.
///
/// A valid configuration is a non-decreasing sequence over `0..=level` that
/// starts at 0 and uses every class, so it is fixed by where the class
/// increments happen among the `priorities - 1` gaps.
pub fn valid_configs(priorities: usize, level: usize) -> Result<Vec<PreemptionConfig>> {
    if priorities == 0 {
        return Err(Error::InvalidConfig("no priorities to configure".into()));
    }
    if level >= priorities {
        return Err(Error::InvalidConfig(format!(
            "level {level} needs at least {} distinct priorities, have {priorities}",
            level + 1
        )));
    }
    let mut out = Vec::new();
    let mut entries = vec![0u8; priorities];
    fill(&mut entries, 1, level as u8, &mut out);
    Ok(out)
}

fn fill(entries: &mut Vec<u8>, pos: usize, level: u8, out: &mut Vec<PreemptionConfig>) {
    let p = entries.len();
    let current = entries[pos - 1];
    if pos == p {
        if current == level {
            out.push(PreemptionConfig::new(level, entries.clone()));
        }
        return;
    }
    // Positions after `pos` must still be able to climb to `level`.
    let left = (p - pos - 1) as u8;
    for c in [current, current + 1] {
        if c > level || level - c > left {
            continue;
        }
        entries[pos] = c;
        fill(entries, pos + 1, level, out);
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of valid configurations at `level` for `priorities` priorities.
pub fn config_count(priorities: usize, level: usize) -> u128 {
    if priorities == 0 {
        return 0;
    }
    binomial(priorities as u64 - 1, level as u64)
}

/// Configurations over all levels `1..priorities`, i.e. `2^(p-1) - 1`.
pub fn total_search_size(priorities: usize) -> u128 {
    if priorities == 0 {
        return 0;
    }
    (1u128 << (priorities - 1)) - 1
}

#[derive(Debug, Clone, Default)]
pub struct SynthesisOptions {
    pub analysis: AnalysisOptions,
    /// Evaluate all configurations of a level concurrently. The chosen
    /// configuration is the same either way; only `evaluated` counts differ.
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SynthesisOutcome {
    Found { level: u8, config: PreemptionConfig },
    Unschedulable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelStats {
    pub level: u8,
    pub configs: u128,
    pub evaluated: usize,
    pub passed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynthesisResult {
    pub schema_version: u32,
    #[serde(flatten)]
    pub outcome: SynthesisOutcome,
    /// Configurations a front-to-back search tries before stopping.
    pub configs_tested: u128,
    pub levels: Vec<LevelStats>,
}

/// Memoized schedulability test over configurations of one flow set.
pub struct Oracle<'a> {
    network: &'a Network,
    flows: &'a [Flow],
    routes: &'a Routes,
    opts: AnalysisOptions,
    cache: Mutex<HashMap<Vec<u8>, bool>>,
}

impl<'a> Oracle<'a> {
    pub fn new(network: &'a Network, flows: &'a [Flow], routes: &'a Routes, opts: &AnalysisOptions) -> Self {
        Oracle { network, flows, routes, opts: opts.clone(), cache: Mutex::new(HashMap::new()) }
    }

    pub fn schedulable(&self, config: &PreemptionConfig) -> Result<bool> {
        if let Some(&v) = self.cache.lock().unwrap().get(&config.entries) {
            return Ok(v);
        }
        let v = analyze(self.network, self.flows, self.routes, config, &self.opts)?.schedulable;
        self.cache.lock().unwrap().insert(config.entries.clone(), v);
        Ok(v)
    }

    /// True if some configuration at `level` is schedulable.
    pub fn any_at(&self, priorities: usize, level: usize) -> Result<bool> {
        for c in valid_configs(priorities, level)? {
            if self.schedulable(&c)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Tries levels `0, 1, ..` in order and returns the first schedulable
/// configuration of the lowest level that has one.
pub fn assign_preemption_class(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let p = PriorityRanks::of(flows)?.len();
    if p == 0 {
        return Err(Error::InvalidConfig("empty flow set".into()));
    }
    let oracle = Oracle::new(network, flows, routes, &opts.analysis);
    let mut tested = 0u128;
    let mut levels = Vec::new();
    for m in 0..p {
        let configs = valid_configs(p, m)?;
        let (verdicts, evaluated): (Vec<bool>, usize) = if opts.parallel {
            let v = configs.par_iter().map(|c| oracle.schedulable(c)).collect::<Result<Vec<_>>>()?;
            let n = v.len();
            (v, n)
        } else {
            let mut v = Vec::new();
            for c in &configs {
                let ok = oracle.schedulable(c)?;
                v.push(ok);
                if ok {
                    break;
                }
            }
            let n = v.len();
            (v, n)
        };
        let passed = verdicts.iter().filter(|&&v| v).count();
        levels.push(LevelStats { level: m as u8, configs: configs.len() as u128, evaluated, passed });
        if let Some(k) = verdicts.iter().position(|&v| v) {
            tested += k as u128 + 1;
            return Ok(SynthesisResult {
                schema_version: SCHEMA_VERSION,
                outcome: SynthesisOutcome::Found { level: m as u8, config: configs[k].clone() },
                configs_tested: tested,
                levels,
            });
        }
        tested += configs.len() as u128;
    }
    Ok(SynthesisResult { schema_version: SCHEMA_VERSION, outcome: SynthesisOutcome::Unschedulable, configs_tested: tested, levels })
}

/// The configuration used when only a level is given: the first schedulable
/// configuration at `level` in canonical order, or failing that the one
/// with the most schedulable flows (earliest on ties).
pub fn best_config_at(
    network: &Network,
    flows: &[Flow],
    routes: &Routes,
    level: usize,
    opts: &AnalysisOptions,
) -> Result<PreemptionConfig> {
    let p = PriorityRanks::of(flows)?.len();
    if p == 0 || level >= p {
        return Err(Error::InvalidConfig(format!("level {level} needs at least {} priorities", level + 1)));
    }
    let mut best: Option<(usize, PreemptionConfig)> = None;
    for c in valid_configs(p, level)? {
        let report = analyze(network, flows, routes, &c, opts)?;
        if report.schedulable {
            return Ok(c);
        }
        let n = report.schedulable_count();
        if best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, c));
        }
    }
    Ok(best.expect("every level below p has a configuration").1)
}
