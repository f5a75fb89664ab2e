//! Best-first branch and bound over LP relaxations. Branching fixes the most
//! fractional binary; nodes are explored lowest-bound first with FIFO
//! tie-breaks, so runs are deterministic for identical inputs.

use super::simplex::{solve_lp_with_bounds, LpError, LpOptions, LpOutcome};
use super::{MilpModel, VarKind};
use serde::Serialize;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct MilpParams {
    pub gap_tol: f64,
    pub int_tol: f64,
    pub feas_tol: f64,
    pub node_limit: usize,
    /// Wall-clock cutoff. Leave `None` for reproducible runs.
    pub time_limit: Option<Duration>,
    pub lp: LpOptions,
}

impl Default for MilpParams {
    fn default() -> Self {
        MilpParams {
            gap_tol: 1e-4,
            int_tol: 1e-6,
            feas_tol: 1e-7,
            node_limit: 100_000,
            time_limit: None,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MilpStatus {
    Optimal,
    FeasibleGap,
    Infeasible,
    Unbounded,
    NodeLimit,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_pivots: u64,
    /// Wall time; excluded from serialized artifacts elsewhere to keep
    /// outputs byte-reproducible.
    #[serde(skip)]
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    pub best_bound: Option<f64>,
    /// `(objective - bound) / max(1, |objective|)` when both exist.
    pub gap: Option<f64>,
    pub stats: SolveStats,
}

/// Optional extensions to the search; the engine stays domain-blind.
#[derive(Default)]
pub struct SolveHooks<'a> {
    /// Feasible integral assignment to seed the incumbent.
    pub initial_incumbent: Option<Vec<f64>>,
    /// Called on fractional node LP points; may return a feasible integral
    /// assignment built from them.
    #[allow(clippy::type_complexity)]
    pub polish: Option<Box<dyn Fn(&[f64]) -> Option<Vec<f64>> + 'a>>,
}

pub fn solve_milp(model: &MilpModel, params: &MilpParams) -> Result<MilpSolution, MilpError> {
    solve_milp_with_hooks(model, params, SolveHooks::default())
}

struct Node {
    id: u64,
    /// Valid lower bound inherited from the parent LP.
    key: f64,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; reverse for lowest-bound-first, FIFO ties
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve_milp_with_hooks(
    model: &MilpModel,
    params: &MilpParams,
    hooks: SolveHooks<'_>,
) -> Result<MilpSolution, MilpError> {
    model.validate().map_err(LpError::Model)?;
    if params.node_limit == 0 {
        return Err(MilpError::Parameter("node_limit must be positive".into()));
    }
    let start = Instant::now();
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let base_lo: Vec<f64> = model.variables.iter().map(|v| v.lo).collect();
    let base_up: Vec<f64> = model.variables.iter().map(|v| v.up).collect();

    let mut incumbent: Option<Vec<f64>> = None;
    let mut incumbent_obj = f64::INFINITY;
    let accept = |cand: Vec<f64>,
                      incumbent: &mut Option<Vec<f64>>,
                      incumbent_obj: &mut f64,
                      node_bound: Option<f64>| {
        if cand.len() != model.n_vars() {
            return;
        }
        if model.max_violation(&cand) > params.feas_tol
            || model.max_integrality_violation(&cand) > params.int_tol
        {
            return;
        }
        let obj = model.objective_value(&cand);
        if let Some(bound) = node_bound {
            // weak duality: a node's LP bound never exceeds an integral value
            // found inside its subtree
            debug_assert!(
                bound <= obj + 1e-6 * (1.0 + obj.abs()),
                "node bound {bound} above integral objective {obj}"
            );
        }
        if obj < *incumbent_obj - 1e-12 {
            debug_assert!(obj <= *incumbent_obj, "incumbent objective must not increase");
            *incumbent_obj = obj;
            *incumbent = Some(cand);
        }
    };

    if let Some(seed) = hooks.initial_incumbent {
        accept(seed, &mut incumbent, &mut incumbent_obj, None);
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        key: f64::NEG_INFINITY,
        fixes: Vec::new(),
    });
    let mut next_id = 1u64;
    let mut nodes = 0usize;
    let mut pivots = 0u64;
    let mut best_bound = f64::NEG_INFINITY;
    let mut hit_limit = false;
    let mut unbounded = false;

    while let Some(node) = heap.pop() {
        if nodes >= params.node_limit {
            hit_limit = true;
            break;
        }
        if let Some(limit) = params.time_limit {
            if start.elapsed() >= limit {
                hit_limit = true;
                break;
            }
        }
        // best-first: popped keys are nondecreasing valid global bounds
        if node.key.is_finite() {
            debug_assert!(node.key >= best_bound - 1e-9, "bound regressed");
            best_bound = best_bound.max(node.key);
        }
        if node.key >= incumbent_obj - 1e-9 {
            // remaining open nodes all have keys >= this one: done
            heap.clear();
            break;
        }
        nodes += 1;

        let mut lo = base_lo.clone();
        let mut up = base_up.clone();
        for &(j, v) in &node.fixes {
            lo[j] = v;
            up[j] = v;
        }
        let outcome = solve_lp_with_bounds(model, &lo, &up, &params.lp)?;
        let lp = match outcome {
            LpOutcome::Infeasible(_) => continue,
            LpOutcome::Unbounded(_) => {
                unbounded = true;
                break;
            }
            LpOutcome::Optimal(lp) => lp,
        };
        pivots += lp.pivots as u64;
        let bound = lp.objective;
        if bound >= incumbent_obj - 1e-9 {
            continue;
        }
        let frac = binaries
            .iter()
            .map(|&j| (j, lp.x[j].min(1.0 - lp.x[j]).max(0.0)))
            .filter(|&(_, f)| f > params.int_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        match frac {
            None => {
                accept(lp.x, &mut incumbent, &mut incumbent_obj, Some(bound));
            }
            Some((branch_var, _)) => {
                if let Some(polish) = &hooks.polish {
                    if let Some(cand) = polish(&lp.x) {
                        accept(cand, &mut incumbent, &mut incumbent_obj, None);
                    }
                }
                if bound < incumbent_obj - 1e-9 {
                    for value in [0.0, 1.0] {
                        let mut fixes = node.fixes.clone();
                        fixes.push((branch_var, value));
                        heap.push(Node {
                            id: next_id,
                            key: bound,
                            fixes,
                        });
                        next_id += 1;
                    }
                }
            }
        }
        if incumbent.is_some() {
            let open_bound = heap.peek().map_or(incumbent_obj, |n| n.key);
            let gap = (incumbent_obj - open_bound) / incumbent_obj.abs().max(1.0);
            if gap <= params.gap_tol {
                best_bound = best_bound.max(open_bound.min(incumbent_obj));
                heap.clear();
                break;
            }
        }
    }

    let wall = start.elapsed();
    if unbounded {
        return Ok(MilpSolution {
            status: MilpStatus::Unbounded,
            incumbent: None,
            objective_value: None,
            best_bound: None,
            gap: None,
            stats: SolveStats {
                nodes,
                lp_pivots: pivots,
                wall,
            },
        });
    }

    // proven global bound: open subtrees are bounded by their keys, closed
    // ones were pruned against the incumbent
    let open_min = heap.iter().map(|n| n.key).fold(f64::INFINITY, f64::min);
    let final_bound = if heap.is_empty() {
        if incumbent.is_some() {
            incumbent_obj
        } else {
            best_bound
        }
    } else {
        open_min.min(incumbent_obj)
    };

    let (status, objective_value, gap) = match (&incumbent, hit_limit) {
        (Some(_), _) => {
            let gap = (incumbent_obj - final_bound) / incumbent_obj.abs().max(1.0);
            let status = if gap <= params.gap_tol {
                MilpStatus::Optimal
            } else {
                MilpStatus::FeasibleGap
            };
            (status, Some(incumbent_obj), Some(gap.max(0.0)))
        }
        (None, true) => (MilpStatus::NodeLimit, None, None),
        (None, false) => (MilpStatus::Infeasible, None, None),
    };
    Ok(MilpSolution {
        status,
        incumbent,
        objective_value,
        best_bound: if final_bound.is_finite() {
            Some(final_bound)
        } else {
            None
        },
        gap,
        stats: SolveStats {
            nodes,
            lp_pivots: pivots,
            wall,
        },
    })
}
