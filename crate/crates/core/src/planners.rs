//! The three planners compared in the experiments: the fully coupled
//! switching-aware planner, independent per-mode planners, and the planner
//! for the infinite-switching-rate limit (invariant-averaged dynamics).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::markov::RateMatrix;
use crate::model::{Dynamics, PointLabel, Problem, ScalarProfile, VectorProfile};
use crate::real::{Real, Vec2};
use crate::solver::{
    sweep_solve, EulerOperator, Scheme, SemiLagrangianOperator, SolveOptions, SolveReport, UpdateOperator,
    ValueField,
};
use crate::updates::Stencil;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Coupled,
    Uncoupled,
    Infinite,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Coupled, PlannerKind::Uncoupled, PlannerKind::Infinite];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Coupled => "coupled",
            PlannerKind::Uncoupled => "uncoupled",
            PlannerKind::Infinite => "infinite",
        }
    }
}

/// Feedback control `a = P(x, i)` stored per gridpoint and mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T> {
    pub kind: PlannerKind,
    modes: usize,
    controls: Vec<Option<Vec2<T>>>,
}

impl<T: Real> Policy<T> {
    pub fn new(kind: PlannerKind, modes: usize, controls: Vec<Option<Vec2<T>>>) -> Self {
        assert_eq!(controls.len() % modes, 0);
        Policy { kind, modes, controls }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    #[inline]
    pub fn control(&self, point: usize, mode: usize) -> Option<Vec2<T>> {
        self.controls[point * self.modes + mode]
    }

    /// A mode-independent policy viewed as an `n`-mode one.
    pub fn replicate(&self, n: usize) -> Self {
        assert_eq!(self.modes, 1);
        let controls = self.controls.iter().flat_map(|&c| std::iter::repeat_n(c, n)).collect();
        Policy { kind: self.kind, modes: n, controls }
    }
}

/// Everything a planner produces. For the infinite-rate planner `field` and
/// `problem` are the single-mode averaged ones while `policy` is replicated
/// over the real modes.
#[derive(Clone, Debug)]
pub struct Plan<T> {
    pub kind: PlannerKind,
    pub problem: Problem<T>,
    pub field: ValueField<T>,
    pub policy: Policy<T>,
    pub reports: Vec<SolveReport>,
}

fn solve_with<T: Real>(problem: &Problem<T>, scheme: Scheme, options: &SolveOptions) -> Result<(ValueField<T>, SolveReport)> {
    match scheme {
        Scheme::Euler => sweep_solve(problem, &EulerOperator, options),
        Scheme::Semilag => sweep_solve(problem, &SemiLagrangianOperator, options),
    }
}

pub fn solve_coupled<T: Real>(
    problem: &Problem<T>,
    scheme: Scheme,
    options: &SolveOptions,
) -> Result<(ValueField<T>, SolveReport)> {
    solve_with(problem, scheme, options)
}

/// Mode `i` solved alone: its own wind and cost, no switching.
pub fn single_mode_problem<T: Real>(problem: &Problem<T>, mode: usize) -> Result<Problem<T>> {
    let d = problem.dynamics();
    let dynamics = Dynamics {
        speed: d.speed.clone(),
        winds: vec![d.winds[mode].clone()],
        costs: vec![d.costs[mode].clone()],
    };
    problem.with_dynamics(dynamics, RateMatrix::zeros(1))
}

/// Independent single-mode solves, run concurrently.
pub fn solve_uncoupled<T: Real>(
    problem: &Problem<T>,
    scheme: Scheme,
    options: &SolveOptions,
) -> Result<(ValueField<T>, Vec<SolveReport>)> {
    let solved: Vec<(ValueField<T>, SolveReport)> = (0..problem.modes())
        .into_par_iter()
        .map(|i| solve_with(&single_mode_problem(problem, i)?, scheme, options))
        .collect::<Result<_>>()?;
    let (fields, reports): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    Ok((ValueField::stack(&fields), reports))
}

/// Single-mode problem whose drift and cost are averaged under the
/// invariant distribution of the switching process.
pub fn averaged_problem<T: Real>(problem: &Problem<T>) -> Result<Problem<T>> {
    let pi = problem.rates().invariant_distribution()?;
    let d = problem.dynamics();
    let wind = match d.winds.iter().map(|w| w.as_constant()).collect::<Option<Vec<_>>>() {
        Some(ws) => {
            let mut m = [T::zero(); 2];
            for (w, &p) in ws.iter().zip(&pi) {
                m = [m[0] + p * w[0], m[1] + p * w[1]];
            }
            VectorProfile::Constant(m)
        }
        None => {
            let winds = d.winds.clone();
            let pi = pi.clone();
            VectorProfile::Custom(std::sync::Arc::new(move |x| {
                let mut m = [T::zero(); 2];
                for (w, &p) in winds.iter().zip(&pi) {
                    let v = w.eval(x);
                    m = [m[0] + p * v[0], m[1] + p * v[1]];
                }
                m
            }))
        }
    };
    let cost = match d.costs.iter().map(|c| c.as_constant()).collect::<Option<Vec<_>>>() {
        Some(cs) => ScalarProfile::Constant(cs.iter().zip(&pi).map(|(&c, &p)| c * p).sum()),
        None => {
            let costs = d.costs.clone();
            ScalarProfile::Custom(std::sync::Arc::new(move |x| {
                costs.iter().zip(&pi).map(|(c, &p)| c.eval(x) * p).sum()
            }))
        }
    };
    let dynamics = Dynamics { speed: d.speed.clone(), winds: vec![wind], costs: vec![cost] };
    problem.with_dynamics(dynamics, RateMatrix::zeros(1))
}

pub fn solve_infinite_rate<T: Real>(
    problem: &Problem<T>,
    scheme: Scheme,
    options: &SolveOptions,
) -> Result<(Problem<T>, ValueField<T>, SolveReport)> {
    let avg = averaged_problem(problem)?;
    let (field, report) = solve_with(&avg, scheme, options)?;
    Ok((avg, field, report))
}

/// Recomputes the minimising control at every reached free point of a
/// converged field. Where the recomputation fails the control stored during
/// sweeping is kept.
pub fn extract_policy<T: Real>(
    problem: &Problem<T>,
    field: &ValueField<T>,
    scheme: Scheme,
    kind: PlannerKind,
) -> Result<Policy<T>> {
    let n = field.modes();
    let mut controls = vec![None; field.points() * n];
    for p in 0..field.points() {
        if problem.label(p) != PointLabel::Free {
            continue;
        }
        let st = Stencil::new(problem, field.raw(), p);
        for i in 0..n {
            if !field.value(p, i).is_finite() {
                continue;
            }
            let res = match scheme {
                Scheme::Euler => EulerOperator.update(&st, i)?,
                Scheme::Semilag => SemiLagrangianOperator.update(&st, i)?,
            };
            controls[p * n + i] = res.control.or(field.control(p, i));
        }
    }
    Ok(Policy::new(kind, n, controls))
}

/// Solves with the chosen planner and extracts its policy.
pub fn plan<T: Real>(problem: &Problem<T>, kind: PlannerKind, scheme: Scheme, options: &SolveOptions) -> Result<Plan<T>> {
    match kind {
        PlannerKind::Coupled => {
            let (field, report) = solve_coupled(problem, scheme, options)?;
            let policy = extract_policy(problem, &field, scheme, kind)?;
            Ok(Plan { kind, problem: problem.clone(), field, policy, reports: vec![report] })
        }
        PlannerKind::Uncoupled => {
            let (field, reports) = solve_uncoupled(problem, scheme, options)?;
            // Each mode's controls come from its own single-mode problem.
            let per_mode: Vec<Policy<T>> = (0..problem.modes())
                .map(|i| {
                    let single = single_mode_problem(problem, i)?;
                    let f = ValueField::stack(&[field_mode(&field, i)]);
                    extract_policy(&single, &f, scheme, kind)
                })
                .collect::<Result<_>>()?;
            let n = problem.modes();
            let controls = (0..field.points())
                .flat_map(|p| per_mode.iter().map(move |pm| pm.control(p, 0)))
                .collect();
            debug_assert_eq!(per_mode.len(), n);
            Ok(Plan { kind, problem: problem.clone(), field, policy: Policy::new(kind, n, controls), reports })
        }
        PlannerKind::Infinite => {
            let (avg, field, report) = solve_infinite_rate(problem, scheme, options)?;
            let policy = extract_policy(&avg, &field, scheme, kind)?.replicate(problem.modes());
            Ok(Plan { kind, problem: avg, field, policy, reports: vec![report] })
        }
    }
}

fn field_mode<T: Real>(field: &ValueField<T>, mode: usize) -> ValueField<T> {
    field.select_mode(mode)
}
