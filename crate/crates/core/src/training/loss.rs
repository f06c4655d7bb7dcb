//! Training objectives: OD-pair likelihood and graph reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{MathError, TrainError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Floor applied inside `-ln p`.
pub const LOG_FLOOR: f64 = 1e-12;

/// Row-stochastic predicted destination (`p_o`) and origin (`p_d`)
/// distributions from dot products of the origin and destination views.
pub fn od_distributions(tape: &mut Tape, origin: Var, dest: Var) -> Result<(Var, Var), MathError> {
    let od = tape.matmul_nt(origin, dest)?;
    let p_o = tape.softmax_rows(od);
    let do_ = tape.matmul_nt(dest, origin)?;
    let p_d = tape.softmax_rows(do_);
    Ok((p_o, p_d))
}

/// `sum over trips (i, j) of -ln p_o[i][j] - ln p_d[j][i]`, with trips
/// given as an `N x N` count matrix.
pub fn loss_odp(tape: &mut Tape, p_o: Var, p_d: Var, counts: &Tensor) -> Result<Var, MathError> {
    let forward = tape.count_nll(p_o, counts, LOG_FLOOR)?;
    let backward = tape.count_nll(p_d, &counts.transpose(), LOG_FLOOR)?;
    tape.add(forward, backward)
}

/// `sum_ij (target_ij - e_i . e_j)^2`
pub fn loss_reconstruction(tape: &mut Tape, embedding: Var, target: Var) -> Result<Var, MathError> {
    let gram = tape.matmul_nt(embedding, embedding)?;
    let resid = tape.sub(target, gram)?;
    let sq = tape.mul(resid, resid)?;
    Ok(tape.sum(sq))
}

/// Loss values of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub odp: f64,
    pub fp: f64,
    pub sp: f64,
    pub total: f64,
    pub odp_raw: f64,
    pub fp_raw: f64,
    pub sp_raw: f64,
}

/// Unweighted sum of the three components; NaN components are rejected
/// by name.
pub fn total_loss(odp: f64, fp: f64, sp: f64) -> Result<f64, TrainError> {
    for (name, v) in [("L_ODP", odp), ("L_FP", fp), ("L_SP", sp)] {
        if v.is_nan() {
            return Err(TrainError::NanComponent(name));
        }
    }
    Ok(odp + fp + sp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_embeddings_give_uniform_rows() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(4, 3));
        let (po, pd) = od_distributions(&mut tape, z, z).unwrap();
        assert!(tape.value(po).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(tape.value(pd).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn od_rows_match_direct_softmax() {
        let eo = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.1], vec![-0.3, 0.7]]);
        let ed = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.2, -0.4], vec![-1.5, 1.1]]);
        let mut tape = Tape::new();
        let (o, d) = (tape.leaf(eo.clone()), tape.leaf(ed.clone()));
        let (po, pd) = od_distributions(&mut tape, o, d).unwrap();
        for i in 0..3 {
            let so: Vec<f64> = (0..3).map(|j| (eo.get(i, 0) * ed.get(j, 0) + eo.get(i, 1) * ed.get(j, 1)).exp()).collect();
            let sd: Vec<f64> = (0..3).map(|j| (ed.get(i, 0) * eo.get(j, 0) + ed.get(i, 1) * eo.get(j, 1)).exp()).collect();
            let (zo, zd): (f64, f64) = (so.iter().sum(), sd.iter().sum());
            for j in 0..3 {
                assert!((tape.value(po).get(i, j) - so[j] / zo).abs() < 1e-12);
                assert!((tape.value(pd).get(i, j) - sd[j] / zd).abs() < 1e-12);
            }
            assert!((tape.value(po).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_prediction_loss() {
        let (n, m) = (5usize, 7.0);
        let mut counts = Tensor::zeros(n, n);
        counts.set(0, 1, 3.0);
        counts.set(2, 2, 1.0);
        counts.set(4, 0, 3.0);
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::filled(n, n, 1.0 / n as f64));
        let l = loss_odp(&mut tape, p, p, &counts).unwrap();
        assert!((tape.value(l).item() - 2.0 * m * (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn three_trip_fixture() {
        // trips (0,1), (1,0), (0,1)
        let counts = Tensor::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.0]]);
        let po = Tensor::from_rows(&[vec![0.3, 0.7], vec![0.6, 0.4]]);
        let pd = Tensor::from_rows(&[vec![0.2, 0.8], vec![0.9, 0.1]]);
        let mut tape = Tape::new();
        let (a, b) = (tape.leaf(po), tape.leaf(pd));
        let l = loss_odp(&mut tape, a, b, &counts).unwrap();
        // -ln po(1|0) - ln pd(0|1), twice, then -ln po(0|1) - ln pd(1|0)
        let expect = 2.0 * (-(0.7f64).ln() - (0.9f64).ln()) + (-(0.6f64).ln() - (0.8f64).ln());
        assert!((tape.value(l).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn moving_mass_to_observed_pair_lowers_loss() {
        let counts = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let mut prev = f64::INFINITY;
        for p in [0.2, 0.4, 0.6, 0.8] {
            let mut tape = Tape::new();
            let v = tape.leaf(Tensor::from_rows(&[vec![1.0 - p, p], vec![p, 1.0 - p]]));
            let lv = loss_odp(&mut tape, v, v, &counts).unwrap();
            let l = tape.value(lv).item();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn reconstruction_examples() {
        let target = Tensor::from_rows(&[vec![1.0, 0.5], vec![0.5, 2.0]]);
        let mut tape = Tape::new();
        let t = tape.leaf(target.clone());
        let z = tape.leaf(Tensor::zeros(2, 3));
        let l = loss_reconstruction(&mut tape, z, t).unwrap();
        assert_eq!(tape.value(l).item(), 1.0 + 0.25 + 0.25 + 4.0);

        let e = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0]]);
        let exact = tape.leaf(e.matmul_nt(&e).unwrap());
        let ev = tape.leaf(e);
        let l = loss_reconstruction(&mut tape, ev, exact).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);

        // N=2, d=1: e = [2, -1], C = [[1, 0], [0, 3]]
        // gram = [[4, -2], [-2, 1]] -> residuals [[-3, 2], [2, 2]] -> 9 + 4 + 4 + 4
        let e = tape.leaf(Tensor::from_rows(&[vec![2.0], vec![-1.0]]));
        let c = tape.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]));
        let l = loss_reconstruction(&mut tape, e, c).unwrap();
        assert_eq!(tape.value(l).item(), 21.0);
    }

    #[test]
    fn total_is_plain_sum() {
        assert_eq!(total_loss(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(total_loss(1.0, 2.0, 3.0).unwrap(), 6.0);
        assert!(matches!(total_loss(1.0, f64::NAN, 3.0), Err(TrainError::NanComponent("L_FP"))));
    }
}
