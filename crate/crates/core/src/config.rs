//! Priority-to-preemption-class mappings.
//!
//! A configuration at level `m` maps the `p` distinct priorities in use (ordered
//! from highest, numerically smallest, to lowest) onto classes `0..=m`. Class 0
//! is express; every other class is preemptable by the classes below it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Flow, FlowId};

/// Distinct priorities of a flow set, highest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityRanks {
    distinct: Vec<u8>,
}

impl PriorityRanks {
    pub fn of(flows: &[Flow]) -> Result<Self> {
        let mut distinct = Vec::with_capacity(flows.len());
        for f in flows {
            let p = f.priority.ok_or_else(|| Error::InvalidFlow {
                flow: f.id.0.clone(),
                reason: "flow has no priority".into(),
            })?;
            distinct.push(p);
        }
        distinct.sort_unstable();
        distinct.dedup();
        Ok(PriorityRanks { distinct })
    }

    pub fn len(&self) -> usize {
        self.distinct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct.is_empty()
    }

    pub fn rank(&self, priority: u8) -> Option<usize> {
        self.distinct.binary_search(&priority).ok()
    }

    pub fn priorities(&self) -> &[u8] {
        &self.distinct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowClassKind {
    ExpressLike,
    TpLike,
    BpLike,
}

impl FlowClassKind {
    pub fn of(class: u8, level: u8) -> Self {
        if class == 0 {
            FlowClassKind::ExpressLike
        } else if class == level {
            FlowClassKind::BpLike
        } else {
            FlowClassKind::TpLike
        }
    }

    pub fn is_preemptable(self) -> bool {
        self != FlowClassKind::ExpressLike
    }
}

/// `entries[r]` is the class of the priority with rank `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PreemptionConfig {
    pub level: u8,
    pub entries: Vec<u8>,
}

impl PreemptionConfig {
    pub fn new(level: u8, entries: Vec<u8>) -> Self {
        PreemptionConfig { level, entries }
    }

    /// Every priority in the express class.
    pub fn non_preemptive(priorities: usize) -> Self {
        PreemptionConfig { level: 0, entries: vec![0; priorities] }
    }

    /// One class per priority.
    pub fn fully_preemptive(priorities: usize) -> Self {
        let entries: Vec<u8> = (0..priorities as u8).collect();
        PreemptionConfig { level: priorities.saturating_sub(1) as u8, entries }
    }

    /// Checks the shape and rules R2/R3 without reference to any flows.
    pub fn check(&self) -> Result<()> {
        let v = self.violations_of_entries();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::RuleViolations(v))
        }
    }

    fn violations_of_entries(&self) -> Vec<RuleViolation> {
        let mut out = Vec::new();
        for i in 1..self.entries.len() {
            if self.entries[i] < self.entries[i - 1] {
                out.push(RuleViolation::R2 { rank: i, class: self.entries[i], previous: self.entries[i - 1] });
            }
        }
        let out_of_range: Vec<u8> = self.entries.iter().copied().filter(|&c| c > self.level).collect();
        let missing: Vec<u8> = (0..=self.level).filter(|c| !self.entries.contains(c)).collect();
        if !missing.is_empty() || !out_of_range.is_empty() {
            out.push(RuleViolation::R3 { level: self.level, missing, out_of_range });
        }
        out
    }

    pub fn class_of_rank(&self, rank: usize) -> u8 {
        self.entries[rank]
    }

    /// Copies of `flows` with `class` filled in from this configuration.
    pub fn apply(&self, flows: &[Flow]) -> Result<Vec<Flow>> {
        let ranks = PriorityRanks::of(flows)?;
        shape_check(self, &ranks)?;
        self.check()?;
        Ok(flows
            .iter()
            .map(|f| {
                let mut g = f.clone();
                g.class = Some(self.entries[ranks.rank(f.priority.unwrap()).unwrap()]);
                g
            })
            .collect())
    }
}

impl fmt::Display for PreemptionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(|c| c.to_string()).collect();
        write!(f, "m={} [{}]", self.level, parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule")]
pub enum RuleViolation {
    /// A priority maps to more than one class.
    R1 { priority: u8, classes: Vec<u8>, flows: Vec<FlowId> },
    /// A lower priority sits in a numerically smaller class than a higher one.
    R2 { rank: usize, class: u8, previous: u8 },
    /// Classes in use are not exactly `0..=level`.
    R3 { level: u8, missing: Vec<u8>, out_of_range: Vec<u8> },
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleViolation::R1 { priority, classes, .. } => {
                write!(f, "R1: priority {priority} maps to classes {classes:?}")
            }
            RuleViolation::R2 { rank, class, previous } => write!(
                f,
                "R2: priority rank {rank} has class {class} below the class {previous} of a higher priority"
            ),
            RuleViolation::R3 { level, missing, out_of_range } => write!(
                f,
                "R3: classes must cover exactly 0..={level} (missing {missing:?}, out of range {out_of_range:?})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationResult {
    pub violations: Vec<RuleViolation>,
}

impl ValidationResult {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn shape_check(config: &PreemptionConfig, ranks: &PriorityRanks) -> Result<()> {
    if config.entries.len() != ranks.len() {
        return Err(Error::InvalidConfig(format!(
            "{} entries for {} distinct priorities",
            config.entries.len(),
            ranks.len()
        )));
    }
    Ok(())
}

/// Checks R1-R3 for `config` over `flows`. Flows that already carry a class
/// must agree with the configuration. A length mismatch between the entries
/// and the distinct priorities is a structural error rather than a violation.
pub fn validate_config(flows: &[Flow], config: &PreemptionConfig) -> Result<ValidationResult> {
    let ranks = PriorityRanks::of(flows)?;
    shape_check(config, &ranks)?;
    let mut violations = Vec::new();
    let mut declared: BTreeMap<u8, BTreeMap<u8, Vec<FlowId>>> = BTreeMap::new();
    for f in flows {
        if let Some(c) = f.class {
            declared.entry(f.priority.unwrap()).or_default().entry(c).or_default().push(f.id.clone());
        }
    }
    for (p, by_class) in declared {
        let configured = config.entries[ranks.rank(p).unwrap()];
        if by_class.len() > 1 || !by_class.contains_key(&configured) {
            let mut classes: Vec<u8> = by_class.keys().copied().collect();
            if !classes.contains(&configured) {
                classes.push(configured);
                classes.sort_unstable();
            }
            let flows = by_class.into_iter().filter(|(c, _)| *c != configured).flat_map(|(_, v)| v).collect();
            violations.push(RuleViolation::R1 { priority: p, classes, flows });
        }
    }
    violations.extend(config.violations_of_entries());
    Ok(ValidationResult { violations })
}

/// Reads a configuration off the `class` fields of a prioritized flow set.
pub fn config_from_flow_classes(flows: &[Flow]) -> Result<PreemptionConfig> {
    let ranks = PriorityRanks::of(flows)?;
    let mut entries: Vec<Option<u8>> = vec![None; ranks.len()];
    let mut r1 = Vec::new();
    for f in flows {
        let c = f.class.ok_or_else(|| Error::InvalidFlow {
            flow: f.id.0.clone(),
            reason: "flow has no preemption class".into(),
        })?;
        let r = ranks.rank(f.priority.unwrap()).unwrap();
        match entries[r] {
            None => entries[r] = Some(c),
            Some(prev) if prev != c => r1.push(RuleViolation::R1 {
                priority: f.priority.unwrap(),
                classes: vec![prev.min(c), prev.max(c)],
                flows: vec![f.id.clone()],
            }),
            _ => {}
        }
    }
    if !r1.is_empty() {
        return Err(Error::RuleViolations(r1));
    }
    let entries: Vec<u8> = entries.into_iter().map(|c| c.unwrap()).collect();
    let level = entries.iter().copied().max().unwrap_or(0);
    let config = PreemptionConfig { level, entries };
    config.check()?;
    Ok(config)
}

/// How preemption classes are chosen for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheme {
    NonPreemptive,
    FullyPreemptive,
    Config(PreemptionConfig),
    /// Use the `class` fields already present on the flows.
    FromFlows,
}

impl Scheme {
    pub fn resolve(&self, flows: &[Flow]) -> Result<PreemptionConfig> {
        let ranks = PriorityRanks::of(flows)?;
        let config = match self {
            Scheme::NonPreemptive => PreemptionConfig::non_preemptive(ranks.len()),
            Scheme::FullyPreemptive => PreemptionConfig::fully_preemptive(ranks.len()),
            Scheme::Config(c) => c.clone(),
            Scheme::FromFlows => return config_from_flow_classes(flows),
        };
        let v = validate_config(flows, &config)?;
        if !v.is_valid() {
            return Err(Error::RuleViolations(v.violations));
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flows(prios: &[u8]) -> Vec<Flow> {
        prios
            .iter()
            .enumerate()
            .map(|(i, &p)| Flow::new(&format!("f{i}"), "a", "b", 1000, 1000, 100).with_priority(p))
            .collect()
    }

    #[test]
    fn ranks_are_dense_and_sorted() {
        let r = PriorityRanks::of(&flows(&[5, 1, 5, 3])).unwrap();
        assert_eq!(r.priorities(), &[1, 3, 5]);
        assert_eq!(r.rank(5), Some(2));
        assert_eq!(r.rank(2), None);
    }

    #[test]
    fn kinds_follow_class_and_level() {
        assert_eq!(FlowClassKind::of(0, 2), FlowClassKind::ExpressLike);
        assert_eq!(FlowClassKind::of(1, 2), FlowClassKind::TpLike);
        assert_eq!(FlowClassKind::of(2, 2), FlowClassKind::BpLike);
        assert_eq!(FlowClassKind::of(0, 0), FlowClassKind::ExpressLike);
    }

    #[test]
    fn valid_and_invalid_configs() {
        let fs = flows(&[0, 1, 2, 3]);
        assert!(validate_config(&fs, &PreemptionConfig::new(2, vec![0, 1, 1, 2])).unwrap().is_valid());
        let r2 = validate_config(&fs, &PreemptionConfig::new(2, vec![0, 2, 1, 2])).unwrap();
        assert!(r2.violations.iter().any(|v| matches!(v, RuleViolation::R2 { rank: 2, .. })));
        let r3 = validate_config(&fs, &PreemptionConfig::new(3, vec![0, 1, 1, 2])).unwrap();
        assert!(matches!(&r3.violations[..], [RuleViolation::R3 { missing, .. }] if missing == &vec![3]));
        let first_nonzero = validate_config(&fs, &PreemptionConfig::new(2, vec![1, 1, 2, 2])).unwrap();
        assert!(!first_nonzero.is_valid());
        assert!(validate_config(&fs, &PreemptionConfig::new(1, vec![0, 1])).is_err());
    }

    #[test]
    fn declared_classes_must_agree() {
        let mut fs = flows(&[0, 1, 1]);
        fs[1].class = Some(1);
        fs[2].class = Some(0);
        let v = validate_config(&fs, &PreemptionConfig::new(1, vec![0, 1])).unwrap();
        assert!(matches!(&v.violations[..], [RuleViolation::R1 { priority: 1, .. }]));
        assert!(config_from_flow_classes(&fs).is_err());
    }

    #[test]
    fn schemes_resolve() {
        let fs = flows(&[2, 4, 6]);
        assert_eq!(Scheme::NonPreemptive.resolve(&fs).unwrap().entries, vec![0, 0, 0]);
        let full = Scheme::FullyPreemptive.resolve(&fs).unwrap();
        assert_eq!((full.level, full.entries), (2, vec![0, 1, 2]));
        let classed: Vec<Flow> = fs.iter().zip([0, 1, 1]).map(|(f, c)| f.clone().with_class(c)).collect();
        assert_eq!(Scheme::FromFlows.resolve(&classed).unwrap(), PreemptionConfig::new(1, vec![0, 1, 1]));
    }
}
