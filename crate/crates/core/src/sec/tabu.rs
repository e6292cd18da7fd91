use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::{community_load, deficit, require_nonnegative_total, KRange};
use crate::data::Substations;
use crate::error::{Error, Result};
use crate::flow::LossModel;
use crate::kmeans::{kmeans, KMeansConfig};
use crate::model::{mw_to_watts, Assignment, Community, CommunityKind, Fleet, MilliWatts};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SecOptConfig {
    pub k_range: KRange,
    /// Number of recently accepted solutions that may not be revisited.
    pub tabu_length: usize,
    pub loss: LossModel,
    pub time_budget: Duration,
    pub seed: u64,
    /// Consecutive accepted moves without strict improvement before a K run stops.
    pub max_stall_iters: usize,
    pub max_iters: usize,
    /// When the move rule finds nothing better, also try relocating every
    /// microgrid to this many of its nearest other communities. 0 disables.
    pub fallback_neighbors: usize,
    /// Cap on microgrids considered for relocation, taken closest to a
    /// community boundary first.
    pub fallback_candidates: usize,
    /// Moves whose load is computed per iteration; larger move sets are first
    /// screened by resulting deficit, then by distance to the target centroid.
    pub screen_limit: usize,
}

impl SecOptConfig {
    pub fn new(k_range: KRange, seed: u64) -> Self {
        Self {
            k_range,
            tabu_length: 10,
            loss: LossModel::default(),
            time_budget: Duration::from_secs(300),
            seed,
            max_stall_iters: 20,
            max_iters: 10_000,
            fallback_neighbors: 3,
            fallback_candidates: 32,
            screen_limit: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.k_range.validate()?;
        if self.screen_limit == 0 {
            return Err(Error::InvalidConfig("screen limit must be at least 1".into()));
        }
        if self.tabu_length == 0 {
            return Err(Error::InvalidConfig("tabu list length must be at least 1".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub iteration: usize,
    pub k: usize,
    /// Load plus violation penalty of the accepted solution.
    pub accepted_objective: f64,
    pub violation_mw: MilliWatts,
    pub description: String,
}

/// Best solution of a search, as community labels per fleet index.
#[derive(Debug, Clone, PartialEq)]
pub struct TabuOutcome {
    pub k: usize,
    pub labels: Vec<usize>,
    /// Load without penalty.
    pub objective: f64,
    pub violation_mw: MilliWatts,
    pub trace: Vec<SearchStep>,
}

/// Tabu search over partitions into exactly K communities for every K in
/// the configured range; returns the feasible solution of least load.
///
/// Fails with `Infeasible` up front when the fleet total is negative at some
/// timestamp, and with `BudgetExhausted` when no K run reached feasibility.
pub fn discover_sec_tabu<F: Scalar>(
    fleet: &Fleet<F>,
    cfg: &SecOptConfig,
    substations: &Substations<F>,
) -> Result<(Assignment<F>, TabuOutcome)> {
    cfg.validate()?;
    require_nonnegative_total(fleet)?;
    let ks: Vec<usize> = cfg.k_range.values().into_iter().filter(|&k| k <= fleet.len()).collect();
    if ks.is_empty() {
        return Err(Error::InvalidK {
            k: cfg.k_range.min,
            n: fleet.len(),
        });
    }
    // Each K gets an equal slice so late runs are not starved on few cores.
    let slice = cfg.time_budget / ks.len() as u32;
    let runs: Vec<TabuOutcome> = ks
        .par_iter()
        .map(|&k| run_k(fleet, k, cfg, substations, Instant::now() + slice))
        .collect::<Result<_>>()?;

    let mut trace = Vec::new();
    for r in &runs {
        trace.extend(r.trace.iter().cloned());
    }
    let feasible = runs
        .iter()
        .filter(|r| r.violation_mw == 0)
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.k.cmp(&b.k)));
    match feasible {
        Some(best) => {
            let outcome = TabuOutcome {
                trace,
                ..best.clone()
            };
            let labels: Vec<Option<usize>> = outcome.labels.iter().map(|&l| Some(l)).collect();
            let assignment = Assignment::from_labels(fleet, CommunityKind::Sec, &labels)
                .with_provenance("algorithm", "sec-tabu")
                .with_provenance("k", outcome.k)
                .with_provenance("tabu_length", cfg.tabu_length)
                .with_provenance("theta", cfg.loss.theta)
                .with_provenance("seed", cfg.seed);
            Ok((assignment, outcome))
        }
        None => {
            let best = runs
                .iter()
                .min_by(|a, b| {
                    a.violation_mw
                        .cmp(&b.violation_mw)
                        .then(a.objective.total_cmp(&b.objective))
                        .then(a.k.cmp(&b.k))
                })
                .expect("at least one K");
            Err(Error::BudgetExhausted {
                best_violation_mw: best.violation_mw,
                best: Box::new(TabuOutcome {
                    trace,
                    ..best.clone()
                }),
            })
        }
    }
}

struct Search<'a, F> {
    fleet: &'a Fleet<F>,
    cfg: &'a SecOptConfig,
    substations: &'a Substations<F>,
    labels: Vec<usize>,
    communities: Vec<Community<F>>,
    loads: Vec<f64>,
    deficits: Vec<MilliWatts>,
    lambda: f64,
    deadline: Instant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Move {
    microgrid: usize,
    from: usize,
    to: usize,
}

struct Evaluated<F> {
    mv: Move,
    value: f64,
    hash: u64,
    from: (Community<F>, f64, MilliWatts),
    to: (Community<F>, f64, MilliWatts),
}

impl<'a, F: Scalar> Search<'a, F> {
    fn penalized(&self, load: f64, deficit_mw: MilliWatts) -> f64 {
        load + self.lambda * mw_to_watts(deficit_mw)
    }

    fn total_load(&self) -> f64 {
        self.loads.iter().sum()
    }

    fn total_deficit(&self) -> MilliWatts {
        self.deficits.iter().sum()
    }

    fn value(&self) -> f64 {
        self.penalized(self.total_load(), self.total_deficit())
    }

    fn hash_with(&self, mv: Option<Move>) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, &l) in self.labels.iter().enumerate() {
            match mv {
                Some(m) if m.microgrid == i => m.to.hash(&mut h),
                _ => l.hash(&mut h),
            }
        }
        h.finish()
    }

    /// Other communities ordered by centroid distance from microgrid `i`.
    fn nearest_others(&self, i: usize, exclude: usize) -> Vec<usize> {
        let p = self.fleet.location(i);
        let mut order: Vec<(F, usize)> = self
            .communities
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != exclude)
            .map(|(j, c)| (p.distance(&c.centroid, self.cfg.loss.metric), j))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        order.into_iter().map(|(_, j)| j).collect()
    }

    /// Community with the strictly largest aggregate at the most timestamps.
    fn top_community(&self) -> usize {
        let k = self.communities.len();
        let mut wins = vec![0usize; k];
        for t in 0..self.fleet.timestamps() {
            let mut best = 0;
            let mut unique = true;
            for j in 1..k {
                let (a, b) = (self.communities[j].aggregate[t], self.communities[best].aggregate[t]);
                if a > b {
                    best = j;
                    unique = true;
                } else if a == b {
                    unique = false;
                }
            }
            if unique {
                wins[best] += 1;
            }
        }
        let total = |j: usize| self.communities[j].aggregate.iter().sum::<MilliWatts>();
        (0..k)
            .max_by(|&a, &b| wins[a].cmp(&wins[b]).then(total(a).cmp(&total(b))).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    fn net(&self, i: usize) -> MilliWatts {
        self.fleet.series(i).iter().sum()
    }

    /// Moves from the search rule: push positive members of the top community
    /// toward the nearest community that is not yet self-sufficient, and pull
    /// negative members out of violating communities into the nearest
    /// self-sufficient one.
    fn rule_moves(&self) -> Vec<Move> {
        let mut moves = Vec::new();
        let top = self.top_community();
        if self.communities[top].len() > 1 {
            for &i in &self.communities[top].members {
                if self.net(i) <= 0 {
                    continue;
                }
                let order = self.nearest_others(i, top);
                let target = order
                    .iter()
                    .copied()
                    .find(|&j| self.deficits[j] > 0)
                    .or_else(|| order.first().copied());
                if let Some(to) = target {
                    moves.push(Move { microgrid: i, from: top, to });
                }
            }
        }
        for (v, c) in self.communities.iter().enumerate() {
            if self.deficits[v] == 0 || c.len() < 2 {
                continue;
            }
            for &i in &c.members {
                if self.net(i) >= 0 {
                    continue;
                }
                if let Some(to) = self.nearest_others(i, v).into_iter().find(|&j| self.deficits[j] == 0) {
                    moves.push(Move { microgrid: i, from: v, to });
                }
            }
        }
        moves.dedup();
        moves
    }

    fn fallback_moves(&self) -> Vec<Move> {
        let metric = self.cfg.loss.metric;
        let mut ranked: Vec<(F, usize, Vec<usize>)> = Vec::new();
        for i in 0..self.fleet.len() {
            let from = self.labels[i];
            if self.communities[from].len() < 2 {
                continue;
            }
            let others = self.nearest_others(i, from);
            let Some(&first) = others.first() else {
                continue;
            };
            let p = self.fleet.location(i);
            let own = p.distance(&self.communities[from].centroid, metric);
            let near = p.distance(&self.communities[first].centroid, metric);
            let closeness = if near > F::zero() { own / near } else { F::of(f64::MAX) };
            ranked.push((closeness, i, others));
        }
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let mut moves = Vec::new();
        for (_, i, others) in ranked.into_iter().take(self.cfg.fallback_candidates) {
            let from = self.labels[i];
            for to in others.into_iter().take(self.cfg.fallback_neighbors) {
                moves.push(Move { microgrid: i, from, to });
            }
        }
        moves
    }

    fn evaluate(&self, mv: Move) -> Evaluated<F> {
        let build = |j: usize, add: Option<usize>, remove: Option<usize>| {
            let mut members: Vec<usize> = self.communities[j]
                .members
                .iter()
                .copied()
                .filter(|&m| Some(m) != remove)
                .collect();
            members.extend(add);
            let c = Community::from_members(self.fleet, self.communities[j].id, members);
            let load = community_load(self.fleet, &c, &self.cfg.loss, self.substations);
            let d = deficit(&c.aggregate);
            (c, load, d)
        };
        let from = build(mv.from, None, Some(mv.microgrid));
        let to = build(mv.to, Some(mv.microgrid), None);
        let load = self.total_load() - self.loads[mv.from] - self.loads[mv.to] + from.1 + to.1;
        let def = self.total_deficit() - self.deficits[mv.from] - self.deficits[mv.to] + from.2 + to.2;
        Evaluated {
            mv,
            value: self.penalized(load, def),
            hash: self.hash_with(Some(mv)),
            from,
            to,
        }
    }

    /// Fleet deficit after a move, from aggregates alone.
    fn deficit_after(&self, mv: Move) -> MilliWatts {
        let e = self.fleet.series(mv.microgrid);
        let shifted = |j: usize, sign: i64| -> MilliWatts {
            self.communities[j]
                .aggregate
                .iter()
                .zip(e)
                .map(|(a, x)| -(a + sign * x).min(0))
                .sum()
        };
        self.total_deficit() - self.deficits[mv.from] - self.deficits[mv.to] + shifted(mv.from, -1) + shifted(mv.to, 1)
    }

    fn screen(&self, moves: &[Move], tabu: &VecDeque<u64>) -> Vec<Move> {
        let mut open: Vec<Move> = moves.iter().copied().filter(|&m| !tabu.contains(&self.hash_with(Some(m)))).collect();
        if open.len() > self.cfg.screen_limit {
            let metric = self.cfg.loss.metric;
            let mut keyed: Vec<(MilliWatts, F, Move)> = open
                .iter()
                .map(|&m| {
                    let d = self.fleet.location(m.microgrid).distance(&self.communities[m.to].centroid, metric);
                    (self.deficit_after(m), d, m)
                })
                .collect();
            keyed.sort_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .then((a.2.microgrid, a.2.to).cmp(&(b.2.microgrid, b.2.to)))
            });
            open = keyed.into_iter().take(self.cfg.screen_limit).map(|k| k.2).collect();
        }
        open
    }

    fn best_move(&self, moves: &[Move], tabu: &VecDeque<u64>) -> Option<Evaluated<F>> {
        let mut best: Option<Evaluated<F>> = None;
        for mv in self.screen(moves, tabu) {
            if best.is_some() && Instant::now() >= self.deadline {
                break;
            }
            let e = self.evaluate(mv);
            if best.as_ref().is_none_or(|b| e.value < b.value) {
                best = Some(e);
            }
        }
        best
    }

    fn apply(&mut self, e: Evaluated<F>) {
        let Move { microgrid, from, to } = e.mv;
        self.labels[microgrid] = to;
        self.communities[from] = e.from.0;
        self.loads[from] = e.from.1;
        self.deficits[from] = e.from.2;
        self.communities[to] = e.to.0;
        self.loads[to] = e.to.1;
        self.deficits[to] = e.to.2;
    }
}

fn run_k<F: Scalar>(
    fleet: &Fleet<F>,
    k: usize,
    cfg: &SecOptConfig,
    substations: &Substations<F>,
    deadline: Instant,
) -> Result<TabuOutcome> {
    let clustering = kmeans(&fleet.locations(), &KMeansConfig::new(k, cfg.seed))?;
    let communities: Vec<Community<F>> = clustering
        .groups()
        .into_iter()
        .enumerate()
        .map(|(j, g)| Community::from_members(fleet, j as u32, g))
        .collect();
    let loads: Vec<f64> = communities
        .iter()
        .map(|c| community_load(fleet, c, &cfg.loss, substations))
        .collect();
    let deficits: Vec<MilliWatts> = communities.iter().map(|c| deficit(&c.aggregate)).collect();
    let mut s = Search {
        fleet,
        cfg,
        substations,
        labels: clustering.labels,
        communities,
        loads,
        deficits,
        lambda: 1.0,
        deadline,
    };
    let (load0, def0) = (s.total_load(), s.total_deficit());
    if def0 > 0 {
        s.lambda = (10.0 * load0 / mw_to_watts(def0)).max(1.0);
    }

    let mut trace = vec![SearchStep {
        iteration: 0,
        k,
        accepted_objective: s.value(),
        violation_mw: def0,
        description: "initial spatial partition".into(),
    }];
    let mut tabu: VecDeque<u64> = VecDeque::with_capacity(cfg.tabu_length + 1);
    tabu.push_back(s.hash_with(None));

    let snapshot = |s: &Search<F>| (s.labels.clone(), s.total_load(), s.total_deficit());
    let mut best = snapshot(&s);
    let better = |cand: &(Vec<usize>, f64, MilliWatts), best: &(Vec<usize>, f64, MilliWatts)| {
        cand.2 < best.2 || (cand.2 == best.2 && cand.1 < best.1)
    };

    let mut stall = 0;
    for iteration in 1..=cfg.max_iters {
        if Instant::now() >= deadline {
            log::warn!("time budget reached at K={k} after {} iterations", iteration - 1);
            break;
        }
        let current = s.value();
        let tol = 1e-12 * current.abs().max(1.0);
        let mut chosen = s.best_move(&s.rule_moves(), &tabu).filter(|e| e.value <= current + tol);
        let mut via_fallback = false;
        if chosen.as_ref().is_none_or(|e| e.value >= current - tol) && cfg.fallback_neighbors > 0 {
            if let Some(e) = s.best_move(&s.fallback_moves(), &tabu).filter(|e| e.value < current - tol) {
                chosen = Some(e);
                via_fallback = true;
            }
        }
        let Some(e) = chosen else {
            break;
        };
        if e.value < current - tol {
            stall = 0;
        } else {
            stall += 1;
        }
        let Move { microgrid, from, to } = e.mv;
        let description = format!(
            "move {} from {} to {}{}",
            fleet.id(microgrid),
            from,
            to,
            if via_fallback { " (relocation)" } else { "" }
        );
        tabu.push_back(e.hash);
        if tabu.len() > cfg.tabu_length {
            tabu.pop_front();
        }
        s.apply(e);
        trace.push(SearchStep {
            iteration,
            k,
            accepted_objective: s.value(),
            violation_mw: s.total_deficit(),
            description,
        });
        let snap = snapshot(&s);
        if better(&snap, &best) {
            best = snap;
        }
        if stall >= cfg.max_stall_iters {
            break;
        }
    }

    Ok(TabuOutcome {
        k,
        labels: best.0,
        objective: best.1,
        violation_mw: best.2,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::model::{MicrogridId, MicrogridRecord};

    fn fleet(rows: &[((f64, f64), Vec<i64>)]) -> Fleet<f64> {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (p, s))| MicrogridRecord {
                id: MicrogridId(i as u32),
                location: Point::new(p.0, p.1),
                series: s.clone(),
            })
            .collect();
        Fleet::new(records, 0).unwrap()
    }

    fn subs() -> Substations<f64> {
        Substations::new(vec![Point::new(0.5, 0.5)]).unwrap()
    }

    #[test]
    fn negative_total_rejected() {
        let f = fleet(&[((0.1, 0.1), vec![5]), ((0.2, 0.2), vec![-10])]);
        let cfg = SecOptConfig::new(KRange::single(1), 0);
        assert!(matches!(discover_sec_tabu(&f, &cfg, &subs()), Err(Error::Infeasible { t: 0, total: -5 })));
    }

    #[test]
    fn singletons_on_positive_fleet() {
        let f = fleet(&[((0.1, 0.1), vec![5, 2]), ((0.7, 0.2), vec![1, 9]), ((0.3, 0.8), vec![4, 4])]);
        let cfg = SecOptConfig::new(KRange::single(3), 0);
        let (a, out) = discover_sec_tabu(&f, &cfg, &subs()).unwrap();
        assert_eq!(out.objective, 0.0);
        assert_eq!(a.communities.len(), 3);
    }

    #[test]
    fn trace_is_monotone() {
        let f = fleet(&[
            ((0.1, 0.1), vec![10_000, 3_000]),
            ((0.15, 0.1), vec![-4_000, -2_000]),
            ((0.9, 0.9), vec![-6_000, 1_000]),
            ((0.85, 0.9), vec![2_000, -1_500]),
            ((0.5, 0.5), vec![1_000, 1_000]),
        ]);
        let cfg = SecOptConfig::new(KRange::new(1, 3, 1), 3);
        let (a, out) = discover_sec_tabu(&f, &cfg, &subs()).unwrap();
        a.validate(&f).unwrap();
        assert!(super::super::sec_feasible(&a).is_ok());
        for k in 1..=3 {
            let steps: Vec<_> = out.trace.iter().filter(|s| s.k == k).collect();
            for w in steps.windows(2) {
                assert!(w[1].accepted_objective <= w[0].accepted_objective + 1e-9);
            }
        }
    }
}
