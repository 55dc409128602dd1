use nalgebra::{DMatrix, DVector};

use super::check_lambda;
use crate::data::{DynDataset, SteadyDataset};
use crate::models::{build_regression_matrix, PolynomialModel, RegressorSpec};
use crate::{Error, Result};

/// Condition numbers above this are treated as rank deficiency.
const MAX_CONDITION: f64 = 1e12;

/// Stacked least-squares problem `min (Y - Ψθ)ᵀ W (Y - Ψθ)` with diagonal `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub psi: DMatrix<f64>,
    pub y: DVector<f64>,
    pub weights: DVector<f64>,
}

impl StackedSystem {
    pub fn from_parts(psi: DMatrix<f64>, y: DVector<f64>, weights: DVector<f64>) -> Result<Self> {
        if y.len() != psi.nrows() || weights.len() != psi.nrows() {
            return Err(Error::Shape {
                what: "stacked system rows",
                expected: psi.nrows(),
                found: if y.len() != psi.nrows() {
                    y.len()
                } else {
                    weights.len()
                },
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("weights", "must be non-negative"));
        }
        Ok(Self { psi, y, weights })
    }

    /// Dynamic rows from `zd` weighted `1 - λ` above static rows from `zs`
    /// weighted `λ`, both mapped through the polynomial terms.
    pub fn new(
        model: &PolynomialModel,
        zd: &DynDataset,
        zs: &SteadyDataset,
        lambda: f64,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let spec = model.spec();
        let dynamic = build_regression_matrix(spec, zd)?;
        let n_d = dynamic.n_rows();
        let n_s = zs.len();
        let p = model.term_count();
        let mut psi = DMatrix::zeros(n_d + n_s, p);
        let mut y = DVector::zeros(n_d + n_s);
        let mut features = vec![0.0; p];
        for (i, row) in dynamic.rows().enumerate() {
            model.features_into(row, &mut features);
            psi.row_mut(i).copy_from_slice(&features);
            y[i] = dynamic.targets()[i];
        }
        for (j, pair) in zs.pairs().iter().enumerate() {
            let r = spec.static_regressor(pair)?;
            model.features_into(&r.psi_bar, &mut features);
            psi.row_mut(n_d + j).copy_from_slice(&features);
            y[n_d + j] = pair.y_bar;
        }
        let weights = DVector::from_fn(
            n_d + n_s,
            |i, _| if i < n_d { 1.0 - lambda } else { lambda },
        );
        Ok(Self { psi, y, weights })
    }

    pub fn rows(&self) -> usize {
        self.psi.nrows()
    }

    /// `(ΨᵀWΨ, ΨᵀWY)`.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut wpsi = self.psi.clone();
        for (mut row, w) in wpsi.row_iter_mut().zip(self.weights.iter()) {
            row *= *w;
        }
        (self.psi.transpose() * &wpsi, wpsi.transpose() * &self.y)
    }

    /// Least-squares solution through the SVD of `√W Ψ`; rows with zero weight
    /// are dropped.
    pub fn solve(&self) -> Result<DVector<f64>> {
        let keep: Vec<usize> = (0..self.rows())
            .filter(|&i| self.weights[i] > 0.0)
            .collect();
        let p = self.psi.ncols();
        let a = DMatrix::from_fn(keep.len(), p, |r, c| {
            self.weights[keep[r]].sqrt() * self.psi[(keep[r], c)]
        });
        let b = DVector::from_fn(keep.len(), |r, _| {
            self.weights[keep[r]].sqrt() * self.y[keep[r]]
        });
        if keep.len() < p {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        let svd = a.svd(true, true);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        svd.solve(&b, 0.0)
            .map_err(|e| Error::invalid("least squares", e))
    }
}

/// The same weighted problem posed as ordinary least squares on augmented data:
/// every dynamic sample and every steady pair (as a constant record) becomes a
/// row scaled by the square root of its weight. Returns `(AᵀA, Aᵀb)`.
pub fn pseudo_sample_system(
    model: &PolynomialModel,
    zd: &DynDataset,
    zs: &SteadyDataset,
    lambda: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_lambda(lambda)?;
    let spec = model.spec();
    let p = model.term_count();
    let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let dynamic = build_regression_matrix(spec, zd)?;
    for (row, &y) in dynamic.rows().zip(dynamic.targets()) {
        rows.push(((1.0 - lambda).sqrt(), model.features(row), y));
    }
    for pair in zs.pairs() {
        let record = constant_record(spec, &pair.u_bar, pair.y_bar)?;
        let pseudo = build_regression_matrix(spec, &record)?;
        rows.push((
            lambda.sqrt(),
            model.features(pseudo.row(0)),
            pseudo.targets()[0],
        ));
    }
    let a = DMatrix::from_fn(rows.len(), p, |r, c| rows[r].0 * rows[r].1[c]);
    let b = DVector::from_fn(rows.len(), |r, _| rows[r].0 * rows[r].2);
    Ok((a.transpose() * &a, a.transpose() * b))
}

fn constant_record(spec: &RegressorSpec, u_bar: &[f64], y_bar: f64) -> Result<DynDataset> {
    let n = spec.max_lag() + 1;
    DynDataset::new(u_bar.iter().map(|&u| vec![u; n]).collect(), vec![y_bar; n])
}

/// Solves symmetric positive definite normal equations by Cholesky.
pub fn solve_normal_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    Ok(chol.solve(b))
}

pub fn fit_wls(
    model: &PolynomialModel,
    zd: &DynDataset,
    zs: &SteadyDataset,
    lambda: f64,
) -> Result<PolynomialModel> {
    let theta = StackedSystem::new(model, zd, zs, lambda)?.solve()?;
    model.with_theta(theta.as_slice().to_vec())
}

/// Ordinary least squares on the dynamic data alone.
pub fn fit_ols(model: &PolynomialModel, zd: &DynDataset) -> Result<PolynomialModel> {
    let dynamic = build_regression_matrix(model.spec(), zd)?;
    let p = model.term_count();
    let mut psi = DMatrix::zeros(dynamic.n_rows(), p);
    let mut features = vec![0.0; p];
    for (i, row) in dynamic.rows().enumerate() {
        model.features_into(row, &mut features);
        psi.row_mut(i).copy_from_slice(&features);
    }
    let n = psi.nrows();
    let system =
        StackedSystem::from_parts(psi, dynamic.target_vector(), DVector::from_element(n, 1.0))?;
    model.with_theta(system.solve()?.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_example1_datasets, simulate_system, NoiseSpec, SimSystem, SteadyPair};

    fn noiseless_ex1() -> (DynDataset, SteadyDataset) {
        let u: Vec<f64> = (0..300)
            .map(|k| ((k * 37 % 101) as f64 / 50.0) - 0.5)
            .collect();
        let sim = simulate_system(SimSystem::Example1, &u, &NoiseSpec::none(), [0.0; 2]).unwrap();
        let pairs = (0..20)
            .map(|j| {
                let u = -1.0 + 4.0 * j as f64 / 19.0;
                SteadyPair::siso(u, SimSystem::Example1.static_output(u).unwrap())
            })
            .collect();
        (sim.data, SteadyDataset::new(pairs).unwrap())
    }

    #[test]
    fn toy_single_regressor() {
        let s = StackedSystem::from_parts(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 4.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert!((s.solve().unwrap()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_example1_recovers_truth() {
        let (zd, zs) = noiseless_ex1();
        let m = PolynomialModel::example1_structure(vec![0.0; 5]).unwrap();
        let truth = [0.75, 0.25, -0.2, 0.0, 0.0];
        for lambda in [0.1, 0.5, 0.9] {
            let fit = fit_wls(&m, &zd, &zs, lambda).unwrap();
            for (a, b) in fit.theta().iter().zip(truth) {
                assert!((a - b).abs() < 1e-6, "λ={lambda}: {:?}", fit.theta());
            }
        }
    }

    #[test]
    fn lambda_zero_matches_ols() {
        let ds = make_example1_datasets(3).unwrap();
        let m = PolynomialModel::example1_structure(vec![0.0; 5]).unwrap();
        let a = fit_wls(&m, &ds.zd, &ds.zs, 0.0).unwrap();
        let b = fit_ols(&m, &ds.zd).unwrap();
        for (x, y) in a.theta().iter().zip(b.theta()) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn static_only_is_rank_deficient() {
        let ds = make_example1_datasets(3).unwrap();
        let m = PolynomialModel::example1_structure(vec![0.0; 5]).unwrap();
        match fit_wls(&m, &ds.zd, &ds.zs, 1.0) {
            Err(Error::Singular { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn weighted_normal_equations_hold() {
        let ds = make_example1_datasets(5).unwrap();
        let m = PolynomialModel::example1_structure(vec![0.0; 5]).unwrap();
        let s = StackedSystem::new(&m, &ds.zd, &ds.zs, 0.3).unwrap();
        let theta = s.solve().unwrap();
        let (a, b) = s.normal_equations();
        let residual = &b - &a * &theta;
        assert!(residual.norm() <= 1e-8 * b.norm());
    }

    #[test]
    fn weights_take_two_values() {
        let ds = make_example1_datasets(5).unwrap();
        let m = PolynomialModel::example1_structure(vec![0.0; 5]).unwrap();
        let s = StackedSystem::new(&m, &ds.zd, &ds.zs, 0.3).unwrap();
        assert_eq!(s.rows(), ds.zd.sample_count() - 2 + ds.zs.len());
        assert!(s.weights.iter().all(|w| *w == 0.7 || *w == 0.3));
    }
}
