//! Continuous-time SISO LTI systems: rational transfer functions, their
//! controllable canonical realization, exact zero-order-hold discretization
//! and simulation.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that two periods are integer multiples.
const RATIO_TOL: f64 = 1e-9;

/// Rational transfer function `num(s) / den(s)`, coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTf {
    /// Builds a strictly proper transfer function. Leading zeros of the
    /// numerator are dropped; an empty or all-zero numerator is the zero system.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.is_empty() || den.iter().any(|c| !c.is_finite()) || num.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("transfer function coefficients must be finite and the denominator non-empty"));
        }
        if den[0] == 0.0 {
            return Err(Error::ZeroLeadingCoefficient);
        }
        let first = num.iter().position(|&c| c != 0.0);
        let num = match first {
            Some(i) => num[i..].to_vec(),
            None => vec![0.0],
        };
        let num_deg = num.len() - 1;
        let den_deg = den.len() - 1;
        if first.is_some() && num_deg >= den_deg {
            return Err(Error::NotStrictlyProper {
                num: num_deg,
                den: den_deg,
            });
        }
        if den_deg == 0 {
            return Err(Error::NotStrictlyProper { num: 0, den: 0 });
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// Number of states of a minimal-size realization (denominator degree).
    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        horner(&self.num, s) / horner(&self.den, s)
    }

    /// `G(iω)` for every frequency in `omegas` (rad/s).
    pub fn freq_response(&self, omegas: &[f64]) -> Vec<Complex64> {
        omegas
            .iter()
            .map(|&w| self.eval(Complex64::new(0.0, w)))
            .collect()
    }

    /// Controllable canonical realization.
    pub fn to_state_space(&self) -> StateSpace {
        let n = self.order();
        let lead = self.den[0];
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            a[(0, j)] = -self.den[j + 1] / lead;
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[0] = 1.0;
        // numerator padded to n coefficients (s^{n-1} .. s^0)
        let mut c = RowDVector::zeros(n);
        let offset = n - self.num.len();
        for (k, &coef) in self.num.iter().enumerate() {
            c[offset + k] = coef / lead;
        }
        StateSpace { a, b, c }
    }
}

fn horner(coefs: &[f64], s: Complex64) -> Complex64 {
    coefs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Strictly proper state-space model `x' = Ax + Bu`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B has {} rows, C has {} columns",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (sI - A)^{-1} B`.
    pub fn transfer(&self, s: Complex64) -> Complex64 {
        let n = self.order();
        let m = DMatrix::<Complex64>::from_diagonal_element(n, n, s) - self.a.map(Complex64::from);
        let b = self.b.map(Complex64::from);
        match m.lu().solve(&b) {
            Some(x) => self.c.map(Complex64::from).dot(&x.transpose()),
            None => Complex64::new(f64::INFINITY, 0.0),
        }
    }
}

/// Exact zero-order-hold discretization. Exponentiates the augmented matrix
/// `[[A, B], [0, 0]] * dt` once; the top blocks are `exp(A dt)` and
/// `∫_0^dt exp(Aτ) dτ B`.
pub fn zoh_discretize(ss: &StateSpace, dt: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let n = ss.order();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&ss.a * dt));
    aug.view_mut((0, n), (n, 1)).copy_from(&(&ss.b * dt));
    let e = aug.exp();
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, 1)).column(0).into_owned();
    Ok((ad, bd))
}

/// Piecewise-constant input: `values[k]` holds on `[k*period, (k+1)*period)`.
/// The signal is zero before `t = 0` and after the last held value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZohSignal {
    pub values: Vec<f64>,
    pub period: f64,
}

impl ZohSignal {
    pub fn new(values: Vec<f64>, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::invalid(format!("hold period must be positive, got {period}")));
        }
        Ok(Self { values, period })
    }

    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let k = (t / self.period).floor() as usize;
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// Number of `dt` steps per hold period; `dt` must divide the period.
    pub fn steps_per_period(&self, dt: f64) -> Result<usize> {
        integer_ratio(self.period, dt)
    }

    /// Samples `u(k*dt)`, `k = 0..n`. Requires `dt` to divide the hold period.
    pub fn sample_grid(&self, dt: f64, n: usize) -> Result<Vec<f64>> {
        let ratio = self.steps_per_period(dt)?;
        Ok((0..n)
            .map(|k| self.values.get(k / ratio).copied().unwrap_or(0.0))
            .collect())
    }
}

pub(crate) fn integer_ratio(big: f64, small: f64) -> Result<usize> {
    if !(small > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {small}")));
    }
    let ratio = big / small;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > RATIO_TOL * ratio.max(1.0) {
        return Err(Error::NonIntegerRatio(ratio));
    }
    Ok(rounded as usize)
}

/// Noiseless output `y(i*dt)`, `i = 1..=n_steps`, from zero initial state.
/// Exact for ZOH inputs whose hold period is a multiple of `dt`.
pub fn simulate_zoh(ss: &StateSpace, u: &ZohSignal, dt: f64, n_steps: usize) -> Result<Vec<f64>> {
    let (ad, bd) = zoh_discretize(ss, dt)?;
    let inputs = u.sample_grid(dt, n_steps)?;
    let mut x = DVector::zeros(ss.order());
    let mut out = Vec::with_capacity(n_steps);
    for &uk in &inputs {
        x = &ad * &x + &bd * uk;
        out.push((&ss.c * &x)[0]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msd() -> RationalTf {
        RationalTf::new(vec![1.0], vec![0.05, 0.2, 1.0]).unwrap()
    }

    #[test]
    fn first_order_realization() {
        let ss = RationalTf::new(vec![1.0], vec![1.0, 1.0]).unwrap().to_state_space();
        assert_eq!(ss.a[(0, 0)], -1.0);
        assert_eq!(ss.b[0], 1.0);
        assert_eq!(ss.c[0], 1.0);
    }

    #[test]
    fn msd_realization_has_unit_dc_gain() {
        let ss = msd().to_state_space();
        assert_eq!(ss.order(), 2);
        let g0 = ss.transfer(Complex64::new(0.0, 0.0));
        assert!((g0.re - 1.0).abs() < 1e-12 && g0.im.abs() < 1e-12);
    }

    #[test]
    fn realization_matches_tf_off_axis() {
        let tf = RationalTf::new(vec![-6400.0, 1600.0], vec![1.0, 5.0, 408.0, 416.0, 1600.0]).unwrap();
        let ss = tf.to_state_space();
        for s in [Complex64::new(0.3, 2.0), Complex64::new(1.0, -7.0), Complex64::new(0.0, 20.0)] {
            let d = ss.transfer(s) - tf.eval(s);
            assert!(d.norm() < 1e-9 * tf.eval(s).norm(), "{s}");
        }
    }

    #[test]
    fn zero_numerator_gives_zero_output() {
        let tf = RationalTf::new(vec![0.0], vec![1.0, 1.0]).unwrap();
        let ss = tf.to_state_space();
        let u = ZohSignal::new(vec![1.0, -2.0, 3.0], 1.0).unwrap();
        assert!(simulate_zoh(&ss, &u, 0.5, 6).unwrap().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn rejects_improper() {
        assert!(matches!(
            RationalTf::new(vec![1.0, 0.0], vec![1.0, 1.0]),
            Err(Error::NotStrictlyProper { num: 1, den: 1 })
        ));
        assert!(matches!(
            RationalTf::new(vec![1.0], vec![0.0, 1.0]),
            Err(Error::ZeroLeadingCoefficient)
        ));
    }

    #[test]
    fn scalar_discretization() {
        let ss = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DVector::from_element(1, 1.0),
            RowDVector::from_element(1, 1.0),
        )
        .unwrap();
        let (ad, bd) = zoh_discretize(&ss, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((ad[(0, 0)] - e).abs() < 1e-15);
        assert!((bd[0] - (1.0 - e)).abs() < 1e-15);
    }

    #[test]
    fn integrator_discretization_and_ramp() {
        let ss = StateSpace::new(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            RowDVector::from_element(1, 1.0),
        )
        .unwrap();
        let (ad, bd) = zoh_discretize(&ss, 0.1).unwrap();
        assert_eq!(ad[(0, 0)], 1.0);
        assert!((bd[0] - 0.1).abs() < 1e-16);
        let u = ZohSignal::new(vec![1.0; 10], 0.5).unwrap();
        let y = simulate_zoh(&ss, &u, 0.1, 50).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert!((yi - 0.1 * (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn msd_step_settles_to_dc_gain() {
        let ss = msd().to_state_space();
        let u = ZohSignal::new(vec![1.0; 10], 3.0).unwrap();
        let y = simulate_zoh(&ss, &u, 0.1, 300).unwrap();
        assert!((y[299] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_misaligned_grid() {
        let ss = msd().to_state_space();
        let u = ZohSignal::new(vec![1.0], 0.25).unwrap();
        assert!(matches!(simulate_zoh(&ss, &u, 0.1, 3), Err(Error::NonIntegerRatio(_))));
        assert!(zoh_discretize(&ss, 0.0).is_err());
    }

    #[test]
    fn freq_response_values() {
        let g = msd().freq_response(&[0.0]);
        assert!((g[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let first = RationalTf::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let g = first.freq_response(&[1.0])[0];
        assert!((g - Complex64::new(0.5, -0.5)).norm() < 1e-15);
    }
}
