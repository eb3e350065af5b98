//! Island-partitioned store of scored skeletons with softmax example sampling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{parse, Expr, ParseError, Skeleton, SymbolScope, TargetKind};
use crate::fit::ScoredSkeleton;
use crate::gateway::Requirement;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Cluster temperature.
    pub tau_c: f64,
    /// Skeleton (code length) temperature.
    pub tau_l: f64,
    pub examples_per_prompt: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            tau_c: 0.2,
            tau_l: 0.2,
            examples_per_prompt: 2,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau_c > 0.0 && self.tau_l > 0.0) {
            return Err("sampler temperatures must be positive".into());
        }
        Ok(())
    }
}

/// Scores are grouped by `round(score * 1000)`.
pub fn cluster_key(score: f64) -> i64 {
    (score * 1000.0).round() as i64
}

/// Linear seed: for every target, `p·v` over all scope names plus a bias.
pub fn linear_seed(kind: TargetKind, scope: &SymbolScope, targets: &[String]) -> Skeleton {
    let mut slot = 0;
    let mut next = || {
        slot += 1;
        Expr::param(slot - 1)
    };
    let exprs = targets
        .iter()
        .map(|_| {
            let mut e: Option<Expr> = None;
            for v in scope.all() {
                let term = Expr::mul(next(), Expr::var(v.as_str()));
                e = Some(match e {
                    Some(acc) => Expr::add(acc, term),
                    None => term,
                });
            }
            match e {
                Some(acc) => Expr::add(acc, next()),
                None => next(),
            }
        })
        .collect();
    Skeleton::from_parts(kind, targets.to_vec(), exprs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub key: i64,
    members: Vec<ScoredSkeleton>,
    score_sum: f64,
}

impl Cluster {
    fn new(key: i64) -> Cluster {
        Cluster {
            key,
            members: Vec::new(),
            score_sum: 0.0,
        }
    }

    pub fn members(&self) -> &[ScoredSkeleton] {
        &self.members
    }

    pub fn mean_score(&self) -> f64 {
        self.score_sum / self.members.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Island {
    pub id: usize,
    clusters: BTreeMap<i64, Cluster>,
    texts: BTreeSet<String>,
}

impl Island {
    fn new(id: usize) -> Island {
        Island {
            id,
            clusters: BTreeMap::new(),
            texts: BTreeSet::new(),
        }
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_members(&self) -> usize {
        self.clusters.values().map(|c| c.members.len()).sum()
    }

    fn insert(&mut self, cand: ScoredSkeleton) -> bool {
        if !self.texts.insert(cand.canonical_text()) {
            return false;
        }
        let key = cluster_key(cand.score);
        let c = self.clusters.entry(key).or_insert_with(|| Cluster::new(key));
        c.score_sum += cand.score;
        c.members.push(cand);
        true
    }

    /// Cluster keys with their softmax probabilities `exp(mean/τ_c)`.
    pub fn cluster_probabilities(&self, tau_c: f64) -> Vec<(i64, f64)> {
        let keys: Vec<i64> = self.clusters.keys().copied().collect();
        let logits: Vec<f64> = self.clusters.values().map(|c| c.mean_score() / tau_c).collect();
        keys.into_iter().zip(softmax(&logits)).collect()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave `u` just past the last bucket.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Orders by score, then shorter code, then canonical text (best first).
pub fn rank_order(a: &ScoredSkeleton, b: &ScoredSkeleton) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.code_length().cmp(&b.code_length()))
        .then_with(|| a.canonical_text().cmp(&b.canonical_text()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    islands: Vec<Island>,
    quarantine: Vec<ScoredSkeleton>,
}

impl Archive {
    /// `m` islands, each holding a copy of the already-scored seed.
    pub fn seeded(m: usize, seed: ScoredSkeleton) -> Archive {
        assert!(m >= 1, "archive needs at least one island");
        let mut a = Archive {
            islands: (0..m).map(Island::new).collect(),
            quarantine: Vec::new(),
        };
        for k in 0..m {
            a.register(k, seed.clone());
        }
        a
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn quarantine(&self) -> &[ScoredSkeleton] {
        &self.quarantine
    }

    pub fn n_clusters(&self) -> usize {
        self.islands.iter().map(Island::n_clusters).sum()
    }

    pub fn n_members(&self) -> usize {
        self.islands.iter().map(Island::n_members).sum()
    }

    /// Inserts `cand` into island `k`. Sentinel-scored candidates go to the
    /// quarantine list; duplicates within the island are dropped. Returns
    /// whether a cluster gained a member.
    pub fn register(&mut self, k: usize, cand: ScoredSkeleton) -> bool {
        if cand.is_worst() || !cand.score.is_finite() {
            self.quarantine.push(cand);
            return false;
        }
        self.islands[k].insert(cand)
    }

    /// Picks an island uniformly, then draws examples by the two-stage
    /// softmax. Returned examples are sorted worst first.
    pub fn sample_examples<R: Rng + ?Sized>(&self, cfg: &SamplerConfig, rng: &mut R) -> (usize, Vec<ScoredSkeleton>) {
        let k = rng.random_range(0..self.islands.len());
        let island = &self.islands[k];
        let clusters: Vec<&Cluster> = island.clusters.values().collect();
        let mut taken: Vec<Vec<bool>> = clusters.iter().map(|c| vec![false; c.members.len()]).collect();
        let mut cluster_w: Vec<f64> = softmax(&clusters.iter().map(|c| c.mean_score() / cfg.tau_c).collect::<Vec<_>>());
        let mut out: Vec<ScoredSkeleton> = Vec::new();
        let mut current: Option<usize> = None;
        while out.len() < cfg.examples_per_prompt {
            let ci = match current {
                Some(ci) => ci,
                None => {
                    if cluster_w.iter().all(|w| *w <= 0.0) {
                        break;
                    }
                    let ci = draw(&cluster_w, rng);
                    current = Some(ci);
                    ci
                }
            };
            let members = &clusters[ci].members;
            let lw: Vec<f64> = members.iter().map(|m| -(m.code_length() as f64) / cfg.tau_l).collect();
            let mut w = softmax(&lw);
            for (j, t) in taken[ci].iter().enumerate() {
                if *t {
                    w[j] = 0.0;
                }
            }
            if w.iter().all(|x| *x <= 0.0) {
                // Exhausted: never redraw this cluster.
                cluster_w[ci] = 0.0;
                current = None;
                continue;
            }
            let j = draw(&w, rng);
            taken[ci][j] = true;
            out.push(members[j].clone());
        }
        out.sort_by(|a, b| a.score.total_cmp(&b.score));
        (k, out)
    }

    /// Draws only the island and cluster stage; used to check the sampler.
    pub fn sample_cluster<R: Rng + ?Sized>(&self, tau_c: f64, rng: &mut R) -> (usize, i64) {
        let k = rng.random_range(0..self.islands.len());
        let probs = self.islands[k].cluster_probabilities(tau_c);
        let w: Vec<f64> = probs.iter().map(|(_, p)| *p).collect();
        (k, probs[draw(&w, rng)].0)
    }

    fn all_members(&self) -> impl Iterator<Item = &ScoredSkeleton> {
        self.islands
            .iter()
            .flat_map(|i| i.clusters.values())
            .flat_map(|c| c.members.iter())
    }

    /// Global best over all islands, `None` only if nothing was ever admitted.
    pub fn best(&self) -> Option<&ScoredSkeleton> {
        self.all_members().min_by(|a, b| rank_order(a, b))
    }

    /// The `k` best distinct skeletons across islands.
    pub fn top_k(&self, k: usize) -> Vec<&ScoredSkeleton> {
        let mut all: Vec<&ScoredSkeleton> = self.all_members().collect();
        all.sort_by(|a, b| rank_order(a, b));
        let mut seen = BTreeSet::new();
        all.retain(|s| seen.insert(s.canonical_text()));
        all.truncate(k);
        all
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let entry = |s: &ScoredSkeleton| CheckpointEntry {
            skeleton: s.canonical_text(),
            params: s.params.clone(),
            score: s.score,
            requirements: s.requirements.clone(),
            fault: s.fault.clone(),
        };
        Checkpoint {
            islands: self
                .islands
                .iter()
                .map(|i| CheckpointIsland {
                    id: i.id,
                    clusters: i
                        .clusters
                        .values()
                        .map(|c| CheckpointCluster {
                            key: c.key,
                            mean_score: c.mean_score(),
                            members: c.members.iter().map(entry).collect(),
                        })
                        .collect(),
                })
                .collect(),
            quarantine: self.quarantine.iter().map(entry).collect(),
        }
    }

    /// Rebuilds an archive from a checkpoint, re-parsing every skeleton.
    pub fn restore(cp: &Checkpoint, kind: TargetKind, scope: &SymbolScope, targets: &[String]) -> Result<Archive, ParseError> {
        let load = |e: &CheckpointEntry| -> Result<ScoredSkeleton, ParseError> {
            Ok(ScoredSkeleton {
                skeleton: parse(&e.skeleton, kind, scope, targets)?,
                params: e.params.clone(),
                score: e.score,
                loss_trace: None,
                requirements: e.requirements.clone(),
                fault: e.fault.clone(),
            })
        };
        let mut a = Archive {
            islands: (0..cp.islands.len().max(1)).map(Island::new).collect(),
            quarantine: Vec::new(),
        };
        for (k, isl) in cp.islands.iter().enumerate() {
            for c in &isl.clusters {
                for m in &c.members {
                    a.register(k, load(m)?);
                }
            }
        }
        for q in &cp.quarantine {
            a.quarantine.push(load(q)?);
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub skeleton: String,
    pub params: Vec<f64>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requirements: Vec<Requirement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointCluster {
    pub key: i64,
    pub mean_score: f64,
    pub members: Vec<CheckpointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIsland {
    pub id: usize,
    pub clusters: Vec<CheckpointCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub islands: Vec<CheckpointIsland>,
    pub quarantine: Vec<CheckpointEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::WORST_SCORE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scope() -> SymbolScope {
        SymbolScope::new(["delta", "omega"], Vec::<String>::new()).unwrap()
    }

    fn scored(text: &str, score: f64) -> ScoredSkeleton {
        let s = parse(text, TargetKind::De, &scope(), &["delta".to_string()]).unwrap();
        ScoredSkeleton {
            params: vec![0.0; s.n_params],
            skeleton: s,
            score,
            loss_trace: None,
            requirements: vec![],
            fault: None,
        }
    }

    #[test]
    fn seed_shape() {
        let targets = vec!["delta".to_string(), "omega".to_string()];
        let s = linear_seed(TargetKind::De, &scope(), &targets);
        assert_eq!(
            s.canonical_text(),
            "ddelta/dt = p0*delta + p1*omega + p2\ndomega/dt = p3*delta + p4*omega + p5"
        );
        let empty = SymbolScope::new(Vec::<String>::new(), Vec::<String>::new()).unwrap();
        let s = linear_seed(TargetKind::De, &empty, &targets[..1]);
        assert_eq!(s.canonical_text(), "ddelta/dt = p0");
    }

    #[test]
    fn seeded_islands() {
        let a = Archive::seeded(10, scored("ddelta/dt = p0*delta + p1", -1.0));
        assert_eq!(a.islands().len(), 10);
        assert!(a.islands().iter().all(|i| i.n_members() == 1));
        assert_eq!(a.best().unwrap().canonical_text(), "ddelta/dt = p0*delta + p1");
    }

    #[test]
    fn cluster_rounding() {
        assert_eq!(cluster_key(-1.2341), -1234);
        assert_eq!(cluster_key(-1.2339), -1234);
        let mut a = Archive::seeded(1, scored("ddelta/dt = p0", -1.2341));
        a.register(0, scored("ddelta/dt = p0*omega", -1.2339));
        assert_eq!(a.n_clusters(), 1);
        let c = a.islands()[0].clusters().next().unwrap();
        assert!((c.mean_score() + 1.234).abs() < 1e-12);
    }

    #[test]
    fn sentinel_and_duplicates() {
        let mut a = Archive::seeded(1, scored("ddelta/dt = p0", -1.0));
        assert!(!a.register(0, scored("ddelta/dt = p0*omega", WORST_SCORE)));
        assert_eq!(a.n_clusters(), 1);
        assert_eq!(a.quarantine().len(), 1);
        assert!(!a.register(0, scored("ddelta/dt =   p0", -0.5)));
        assert_eq!(a.n_members(), 1);
    }

    #[test]
    fn best_breaks_ties_by_length() {
        let mut a = Archive::seeded(2, scored("ddelta/dt = p0", -3.0));
        a.register(0, scored("ddelta/dt = p0*delta + p1*omega", -1.0));
        a.register(1, scored("ddelta/dt = p0*omega", -1.0));
        a.register(1, scored("ddelta/dt = p0*delta", -2.0));
        assert_eq!(a.best().unwrap().canonical_text(), "ddelta/dt = p0*omega");
    }

    #[test]
    fn single_member_is_always_sampled() {
        let a = Archive::seeded(1, scored("ddelta/dt = p0", -1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (k, ex) = a.sample_examples(&SamplerConfig::default(), &mut rng);
        assert_eq!(k, 0);
        assert_eq!(ex.len(), 1);
    }

    #[test]
    fn spillover_and_ordering() {
        let mut a = Archive::seeded(1, scored("ddelta/dt = p0", -1.0));
        a.register(0, scored("ddelta/dt = p0*omega", -3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (_, ex) = a.sample_examples(&SamplerConfig::default(), &mut rng);
            assert_eq!(ex.len(), 2);
            assert!(ex[0].score <= ex[1].score);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = Archive::seeded(2, scored("ddelta/dt = p0", -1.0));
        a.register(1, scored("ddelta/dt = p0*sin(delta)", -0.5));
        a.register(1, scored("ddelta/dt = p0/delta", WORST_SCORE));
        let cp = a.checkpoint();
        let json = serde_json::to_string(&cp).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let b = Archive::restore(&back, TargetKind::De, &scope(), &["delta".to_string()]).unwrap();
        assert_eq!(a, b);
    }
}
