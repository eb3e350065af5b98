/// Work buffers for [`Rk4::step`], sized once per system dimension.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Rk4 {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` from `t` to `t + dt` in place.
    ///
    /// `f(t, x, dx)` writes the derivative. Exogenous inputs that change
    /// within the step are the caller's concern; the simulators here hold
    /// them at their step-start value.
    pub fn step<F>(&mut self, f: &mut F, t: f64, x: &mut [f64], dt: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        f(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        f(t + 0.5 * dt, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        f(t + 0.5 * dt, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut rk = Rk4::new(1);
        let mut x = [1.0];
        let mut f = |_t: f64, x: &[f64], dx: &mut [f64]| dx[0] = -x[0];
        for i in 0..100 {
            rk.step(&mut f, i as f64 * 0.01, &mut x, 0.01);
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn time_dependent_rhs_is_exact_for_cubics() {
        // x' = 3t^2 is integrated exactly by a 4th-order method.
        let mut rk = Rk4::new(1);
        let mut x = [0.0];
        let mut f = |t: f64, _x: &[f64], dx: &mut [f64]| dx[0] = 3.0 * t * t;
        for i in 0..10 {
            rk.step(&mut f, i as f64 * 0.1, &mut x, 0.1);
        }
        assert!((x[0] - 1.0).abs() < 1e-13);
    }
}
