//! Independent spherical-diffusion reference solver for tests.
//!
//! Finite differences on `N` equally spaced radial nodes including the
//! centre and surface, Crank–Nicolson in time, ghost-node Neumann condition
//! at the surface and the `3·D·c_rr` limit at the centre. Concentrations are
//! absolute, so the solver shares nothing with the production model beyond
//! the physics.

pub struct SphereFdm {
    pub c: Vec<f64>,
    radius: f64,
    diffusivity: f64,
}

impl SphereFdm {
    pub fn uniform(nodes: usize, radius: f64, diffusivity: f64, c0: f64) -> Self {
        Self {
            c: vec![c0; nodes],
            radius,
            diffusivity,
        }
    }

    pub fn surface(&self) -> f64 {
        self.c[self.c.len() - 1]
    }

    /// Spatial operator `D·∇²c` with inward surface flux `flux` (mol/m²/s).
    fn laplacian(&self, c: &[f64], flux: f64, out: &mut [f64]) {
        let n = c.len();
        let h = self.radius / (n - 1) as f64;
        let d = self.diffusivity;
        out[0] = 3.0 * d * 2.0 * (c[1] - c[0]) / (h * h);
        for i in 1..n {
            let r = i as f64 * h;
            let right = if i == n - 1 { c[n - 2] + 2.0 * h * flux / d } else { c[i + 1] };
            let left = c[i - 1];
            out[i] = d * ((right - 2.0 * c[i] + left) / (h * h) + (right - left) / (h * r));
        }
    }

    /// One Crank–Nicolson step of length `dt` at constant flux, solved with
    /// a dense-free tridiagonal sweep.
    pub fn step(&mut self, flux: f64, dt: f64) {
        let n = self.c.len();
        let h = self.radius / (n - 1) as f64;
        let d = self.diffusivity;
        // Operator rows: out_i = a_i c_{i-1} + b_i c_i + e_i c_{i+1} + f_i
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut e = vec![0.0; n];
        let mut f = vec![0.0; n];
        b[0] = -6.0 * d / (h * h);
        e[0] = 6.0 * d / (h * h);
        for i in 1..n {
            let r = i as f64 * h;
            let lo = d * (1.0 / (h * h) - 1.0 / (h * r));
            let hi = d * (1.0 / (h * h) + 1.0 / (h * r));
            b[i] = -2.0 * d / (h * h);
            if i == n - 1 {
                a[i] = lo + hi;
                f[i] = hi * 2.0 * h * flux / d;
            } else {
                a[i] = lo;
                e[i] = hi;
            }
        }
        let mut lap = vec![0.0; n];
        self.laplacian(&self.c, flux, &mut lap);
        // (I − dt/2·L) c' = c + dt/2·L c + dt/2·f
        let mut rhs: Vec<f64> = (0..n).map(|i| self.c[i] + 0.5 * dt * lap[i] + 0.5 * dt * f[i]).collect();
        let sub: Vec<f64> = a.iter().map(|x| -0.5 * dt * x).collect();
        let diag: Vec<f64> = b.iter().map(|x| 1.0 - 0.5 * dt * x).collect();
        let sup: Vec<f64> = e.iter().map(|x| -0.5 * dt * x).collect();
        let mut cp = vec![0.0; n];
        cp[0] = sup[0] / diag[0];
        rhs[0] /= diag[0];
        for i in 1..n {
            let m = diag[i] - sub[i] * cp[i - 1];
            cp[i] = sup[i] / m;
            rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= cp[i] * rhs[i + 1];
        }
        self.c = rhs;
    }
}
