use alloc::vec;
use alloc::vec::Vec;

use super::{cg::LinearOperator, Field, Grid};
use crate::error::{Error, Result};

/// The flux-form operator u ↦ div(κ∇u) with face conductivities and zero flux
/// through boundary faces.
#[derive(Clone, Debug)]
pub struct FluxOperator {
    grid: Grid,
    /// One conductivity per interior face, in `Grid::for_each_face` order.
    faces: Vec<f64>,
}

impl FluxOperator {
    pub fn unit(grid: Grid) -> FluxOperator {
        FluxOperator { grid, faces: vec![1.0; grid.face_count()] }
    }

    /// Face conductivities are arithmetic means of the adjacent cell values.
    pub fn from_cells(grid: Grid, kappa: &[f64]) -> Result<FluxOperator> {
        if let Some(cell) = kappa.iter().position(|&k| !(k > 0.0)) {
            return Err(Error::NonPositiveConductivity { cell, value: kappa[cell] });
        }
        let mut faces = Vec::with_capacity(grid.face_count());
        grid.for_each_face(|i, j, _| faces.push(0.5 * (kappa[i] + kappa[j])));
        Ok(FluxOperator { grid, faces })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `out = div(κ∇x)`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0;
        self.grid.for_each_face(|i, j, d| {
            let flux = self.faces[f] * (x[j] - x[i]) / (d * d);
            out[i] += flux;
            out[j] -= flux;
            f += 1;
        });
    }

    /// ∫ κ|∇x|² = −⟨div(κ∇x), x⟩, from face differences.
    pub fn dissipation(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut f = 0;
        self.grid.for_each_face(|i, j, d| {
            let g = (x[j] - x[i]) / d;
            sum += self.faces[f] * g * g;
            f += 1;
        });
        self.grid.cell_volume() * sum
    }

    /// Diagonal of −div(κ∇·).
    pub fn negative_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.grid.len()];
        let mut f = 0;
        self.grid.for_each_face(|i, j, d| {
            let w = self.faces[f] / (d * d);
            diag[i] += w;
            diag[j] += w;
            f += 1;
        });
        diag
    }
}

/// x ↦ D x − s·div(κ∇x) for a diagonal D and scale s ≥ 0: SPD whenever D > 0.
pub struct ShiftedFluxOperator<'a> {
    pub flux: &'a FluxOperator,
    pub diag: &'a [f64],
    pub scale: f64,
}

impl LinearOperator for ShiftedFluxOperator<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.flux.apply(x, y);
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(self.diag) {
            *yi = di * xi - self.scale * *yi;
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let mut d = self.flux.negative_diagonal();
        for (di, si) in d.iter_mut().zip(self.diag) {
            *di = si + self.scale * *di;
        }
        Some(d)
    }
}

/// Δu with zero-flux boundary faces.
pub fn laplacian_neumann(u: &Field) -> Field {
    let mut out = vec![0.0; u.len()];
    FluxOperator::unit(*u.grid()).apply(u.values(), &mut out);
    Field::from_vec(*u.grid(), out)
}

/// div(κ∇u) with arithmetic-mean face conductivity and zero boundary flux.
pub fn div_kappa_grad(kappa: &Field, u: &Field) -> Result<Field> {
    let op = FluxOperator::from_cells(*u.grid(), kappa.values())?;
    let mut out = vec![0.0; u.len()];
    op.apply(u.values(), &mut out);
    Ok(Field::from_vec(*u.grid(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
        Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn hand_stencil() {
        let grid = Grid::line(5, 5.0).unwrap();
        let u = Field::new(grid, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(laplacian_neumann(&u).values(), &[1.0, 0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn constants_in_kernel() {
        let grid = Grid::rect(6, 5, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kappa = random_field(grid, &mut rng, 0.5, 2.0);
        let c = Field::constant(grid, 3.25);
        assert!(laplacian_neumann(&c).values().iter().all(|&v| v == 0.0));
        assert!(div_kappa_grad(&kappa, &c).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_kappa_reduces_to_laplacian() {
        let grid = Grid::rect(7, 4, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_field(grid, &mut rng, -1.0, 1.0);
        let a = div_kappa_grad(&Field::constant(grid, 1.0), &u).unwrap();
        let b = laplacian_neumann(&u);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn divergence_theorem_symmetry_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for grid in [Grid::line(33, 1.0).unwrap(), Grid::rect(12, 9, 1.0, 0.5).unwrap()] {
            for _ in 0..20 {
                let kappa = random_field(grid, &mut rng, 0.1, 3.0);
                let u = random_field(grid, &mut rng, -2.0, 2.0);
                let v = random_field(grid, &mut rng, -2.0, 2.0);
                let au = div_kappa_grad(&kappa, &u).unwrap();
                let av = div_kappa_grad(&kappa, &v).unwrap();
                let scale = au.values().iter().map(|x| x.abs()).sum::<f64>() * grid.cell_volume();
                assert!(au.integral().abs() <= 1e-12 * scale);
                let (l, r) = (au.dot(&v), u.dot(&av));
                assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1.0));
                assert!(au.dot(&u) <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_kappa() {
        let grid = Grid::line(3, 1.0).unwrap();
        let kappa = Field::new(grid, vec![1.0, 0.0, 1.0]).unwrap();
        let err = div_kappa_grad(&kappa, &Field::zeros(grid)).unwrap_err();
        assert_eq!(err, Error::NonPositiveConductivity { cell: 1, value: 0.0 });
    }

    #[test]
    fn monotone_summation_by_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phis: [fn(f64) -> f64; 3] = [|x| x * x * x * x * x, |x| x.atan(), |x| if x > 0.3 { 1.0 } else { 0.0 }];
        for grid in [Grid::line(40, 1.0).unwrap(), Grid::rect(10, 10, 1.0, 1.0).unwrap()] {
            for phi in phis {
                let u = random_field(grid, &mut rng, -1.5, 1.5);
                let lap = laplacian_neumann(&u);
                let s: f64 = lap.values().iter().zip(u.values()).map(|(l, x)| -l * phi(*x)).sum();
                assert!(s >= -1e-12);
            }
        }
    }

    #[test]
    fn second_order_on_cosine() {
        let mut errors = Vec::new();
        for n in [16, 32, 64, 128] {
            let grid = Grid::line(n, 1.0).unwrap();
            let u = Field::from_fn(grid, |[x, _]| libm::cos(core::f64::consts::PI * x));
            let lap = laplacian_neumann(&u);
            let pi2 = core::f64::consts::PI * core::f64::consts::PI;
            let err = (0..n)
                .map(|i| (lap.values()[i] + pi2 * u.values()[i]).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }
}
