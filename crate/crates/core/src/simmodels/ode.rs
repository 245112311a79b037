//! Fixed-step RK4 integration and trajectory utilities.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("output grid must start at t >= 0, be strictly increasing, contain at least two points and lie on multiples of the step")]
    BadGrid,
    #[error("initial state has {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },
}

/// Levels of E entities sampled at T time points. `levels[e][k]` is the level
/// of entity `e` at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub entity_names: Vec<String>,
    pub times: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entity_names.iter().position(|n| n == name)
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.entity_index(name).map(|e| self.levels[e].as_slice())
    }

    /// Levels at the last time point, keyed by entity name.
    pub fn final_levels(&self) -> std::collections::BTreeMap<String, f64> {
        self.entity_names
            .iter()
            .zip(&self.levels)
            .map(|(n, l)| (n.clone(), *l.last().expect("T >= 2")))
            .collect()
    }
}

/// An ODE system that can be simulated by the pipeline.
pub trait OdeSystem: Sync {
    fn entity_names(&self) -> Vec<String>;
    fn initial_state(&self) -> Vec<f64>;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Evenly spaced grid `0, dt, 2dt, ..., t_end`.
pub fn uniform_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Classical RK4 with a fixed `step`, clamping every component at zero after
/// each step and recording the state exactly at the `grid` times.
pub fn integrate_ode<F>(
    rhs: F,
    entity_names: Vec<String>,
    initial: &[f64],
    grid: &[f64],
    step: f64,
) -> Result<Trajectory, OdeError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(OdeError::BadStep(step));
    }
    if entity_names.len() != initial.len() {
        return Err(OdeError::DimensionMismatch {
            expected: entity_names.len(),
            got: initial.len(),
        });
    }
    if grid.len() < 2 || grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OdeError::BadGrid);
    }
    let mut grid_steps = Vec::with_capacity(grid.len());
    for &t in grid {
        let k = t / step;
        if (k - k.round()).abs() > 1e-6 {
            return Err(OdeError::BadGrid);
        }
        grid_steps.push(k.round() as u64);
    }

    let n = initial.len();
    let mut y: Vec<f64> = initial.iter().map(|v| v.max(0.0)).collect();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut levels = vec![Vec::with_capacity(grid.len()); n];

    let mut done: u64 = 0;
    for &target in &grid_steps {
        while done < target {
            let t = done as f64 * step;
            rhs(t, &y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * step * k1[i];
            }
            rhs(t + 0.5 * step, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * step * k2[i];
            }
            rhs(t + 0.5 * step, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + step * k3[i];
            }
            rhs(t + step, &tmp, &mut k4);
            for i in 0..n {
                y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if !y[i].is_finite() {
                    return Err(OdeError::NonFiniteState { time: t + step });
                }
                y[i] = y[i].max(0.0);
            }
            done += 1;
        }
        for (series, &v) in levels.iter_mut().zip(&y) {
            series.push(v);
        }
    }
    Ok(Trajectory {
        entity_names,
        times: grid.to_vec(),
        levels,
    })
}

/// Simulates an [`OdeSystem`] from its own initial state.
pub fn simulate<S: OdeSystem + ?Sized>(system: &S, grid: &[f64], step: f64) -> Result<Trajectory, OdeError> {
    integrate_ode(
        |t, y, dy| system.rhs(t, y, dy),
        system.entity_names(),
        &system.initial_state(),
        grid,
        step,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    At(f64),
    Censored,
}

/// Earliest time `entity` rises above `threshold`, interpolated linearly
/// between the bracketing grid points. Returns `None` if the entity is absent.
pub fn first_crossing_time(traj: &Trajectory, entity: &str, threshold: f64) -> Option<Crossing> {
    let series = traj.series(entity)?;
    let k = match series.iter().position(|&v| v > threshold) {
        Some(k) => k,
        None => return Some(Crossing::Censored),
    };
    if k == 0 {
        return Some(Crossing::At(traj.times[0]));
    }
    let (l0, l1) = (series[k - 1], series[k]);
    let (t0, t1) = (traj.times[k - 1], traj.times[k]);
    let frac = (threshold - l0) / (l1 - l0);
    Some(Crossing::At(t0 + frac.clamp(0.0, 1.0) * (t1 - t0)))
}
