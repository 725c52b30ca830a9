//! Linear autoencoder for sequences.
//!
//! Encoding is the linear recurrence `mᵗ = A xᵗ + B mᵗ⁻¹` with `m⁰ = 0`; decoding
//! inverts one step at a time, `[xᵗ; mᵗ⁻¹] = C mᵗ`. Training is closed form: with
//! `Ξ` the matrix whose rows are the reversed prefixes of every training
//! sequence and `U` its leading right singular vectors, `A = UᵀP`, `B = UᵀRU`
//! and `C = [Aᵀ; Bᵀ]`. At `p = rank(Ξ)` the encoding is lossless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{truncated_svd, Matrix, SliceSvd};

/// Stacked reversed prefixes of a sequence corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    /// `Σ l_q x (l_max · a)`; row for step `t` of sequence `q` is
    /// `[xᵗ, xᵗ⁻¹, …, x¹, 0, …, 0]`.
    pub xi: Matrix,
    /// `(sequence index, 1-based timestep)` for each row.
    pub row_map: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaesModel {
    /// `A`, `p x a`.
    pub encoder_input: Matrix,
    /// `B`, `p x p`.
    pub encoder_state: Matrix,
    /// `C`, `(a + p) x p`.
    pub decoder: Matrix,
}

struct CorpusShape {
    element: usize,
    total: usize,
    longest: usize,
}

fn corpus_shape(sequences: &[Matrix]) -> Result<CorpusShape> {
    let first = sequences
        .iter()
        .find(|s| s.rows() > 0)
        .ok_or_else(|| Error::EmptyInput("corpus has no nonempty sequence".into()))?;
    let element = first.cols();
    if element == 0 {
        return Err(Error::dim("sequence elements have size 0"));
    }
    for (q, s) in sequences.iter().enumerate() {
        if s.rows() > 0 && s.cols() != element {
            return Err(Error::dim(format!(
                "sequence {q} has element size {}, expected {element}",
                s.cols()
            )));
        }
    }
    Ok(CorpusShape {
        element,
        total: sequences.iter().map(Matrix::rows).sum(),
        longest: sequences.iter().map(Matrix::rows).max().unwrap_or(0),
    })
}

pub fn build_data_matrix(sequences: &[Matrix]) -> Result<DataMatrix> {
    let shape = corpus_shape(sequences)?;
    let a = shape.element;
    let mut xi = Matrix::zeros(shape.total, shape.longest * a);
    let mut row_map = Vec::with_capacity(shape.total);
    let mut row = 0;
    for (q, s) in sequences.iter().enumerate() {
        for t in 0..s.rows() {
            let out = xi.row_mut(row);
            for (lag, past) in (0..=t).rev().enumerate() {
                out[lag * a..(lag + 1) * a].copy_from_slice(s.row(past));
            }
            row_map.push((q, t + 1));
            row += 1;
        }
    }
    Ok(DataMatrix { xi, row_map })
}

/// Column block `lag` of the data matrix: the element `lag` steps in the past
/// for every row, zero when it precedes the sequence start.
fn data_matrix_slice(sequences: &[Matrix], shape: &CorpusShape, lag: usize) -> Matrix {
    let a = shape.element;
    let mut block = Matrix::zeros(shape.total, a);
    let mut row = 0;
    for s in sequences {
        for t in 0..s.rows() {
            if t >= lag {
                block.row_mut(row).copy_from_slice(s.row(t - lag));
            }
            row += 1;
        }
    }
    block
}

/// How the leading right singular vectors of the data matrix are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvdMethod {
    /// Materialize the data matrix and run the dense SVD.
    Dense,
    /// Stream one `Σ l_q x a` block per lag, keeping the full numerical rank.
    Slices,
    /// Stream blocks but keep at most this many directions between blocks.
    /// Approximate unless the cap is at least `rank(Ξ)`.
    BoundedSlices(usize),
}

/// Closed-form fit with state size `p`. `use_slices` streams the data matrix one
/// `Σ l_q x a` block at a time instead of materializing it.
pub fn fit_laes(sequences: &[Matrix], p: usize, use_slices: bool) -> Result<LaesModel> {
    let method = if use_slices {
        SvdMethod::Slices
    } else {
        SvdMethod::Dense
    };
    fit_laes_with(sequences, p, method)
}

pub fn fit_laes_with(sequences: &[Matrix], p: usize, method: SvdMethod) -> Result<LaesModel> {
    let shape = corpus_shape(sequences)?;
    let width = shape.longest * shape.element;
    if p == 0 || p > shape.total.min(width) {
        return Err(Error::dim(format!(
            "state size {p} outside 1..={}",
            shape.total.min(width)
        )));
    }
    for s in sequences {
        s.check_finite("laes corpus")?;
    }

    let right = match method {
        SvdMethod::Dense => {
            let data = build_data_matrix(sequences)?;
            truncated_svd(&data.xi, p)?.v
        }
        SvdMethod::Slices | SvdMethod::BoundedSlices(_) => {
            let mut acc = match method {
                SvdMethod::BoundedSlices(cap) => SliceSvd::with_max_rank(cap.max(p)),
                _ => SliceSvd::new(),
            };
            for lag in 0..shape.longest {
                acc.push(&data_matrix_slice(sequences, &shape, lag))?;
            }
            acc.finish(p)?.v
        }
    };
    Ok(LaesModel::from_basis(&right, shape.element))
}

impl LaesModel {
    pub fn new(encoder_input: Matrix, encoder_state: Matrix, decoder: Matrix) -> Result<Self> {
        let (p, a) = encoder_input.shape();
        if encoder_state.shape() != (p, p) || decoder.shape() != (a + p, p) {
            return Err(Error::dim(format!(
                "inconsistent shapes: A {:?}, B {:?}, C {:?}",
                encoder_input.shape(),
                encoder_state.shape(),
                decoder.shape()
            )));
        }
        Ok(LaesModel {
            encoder_input,
            encoder_state,
            decoder,
        })
    }

    /// Builds `A = UᵀP`, `B = UᵀRU` and `C = [Aᵀ; Bᵀ]` from an orthonormal basis
    /// `U` of shape `(l · a) x p`, without forming `P` or `R`.
    pub fn from_basis(u: &Matrix, element: usize) -> Self {
        let (width, p) = u.shape();
        let a = Matrix::from_fn(p, element, |i, c| u[(c, i)]);
        let mut b = Matrix::zeros(p, p);
        for r in element..width {
            b.add_outer(u.row(r), u.row(r - element));
        }
        let decoder = a.transpose().vstack(&b.transpose()).expect("A and B share p");
        LaesModel {
            encoder_input: a,
            encoder_state: b,
            decoder,
        }
    }

    pub fn state_size(&self) -> usize {
        self.encoder_input.rows()
    }

    pub fn input_size(&self) -> usize {
        self.encoder_input.cols()
    }

    /// States `m¹ … mˡ` stacked as rows.
    pub fn encode(&self, sequence: &Matrix) -> Result<Matrix> {
        let p = self.state_size();
        if sequence.rows() > 0 && sequence.cols() != self.input_size() {
            return Err(Error::dim(format!(
                "sequence element size {} does not match model input size {}",
                sequence.cols(),
                self.input_size()
            )));
        }
        let mut states = Matrix::zeros(sequence.rows(), p);
        let mut prev = vec![0.0; p];
        for t in 0..sequence.rows() {
            let mut m = vec![0.0; p];
            self.encoder_input.matvec_acc(sequence.row(t), &mut m);
            self.encoder_state.matvec_acc(&prev, &mut m);
            states.row_mut(t).copy_from_slice(&m);
            prev = m;
        }
        Ok(states)
    }

    /// Final state `mˡ` (zero for an empty sequence).
    pub fn encode_final(&self, sequence: &Matrix) -> Result<Vec<f64>> {
        let states = self.encode(sequence)?;
        Ok(match states.rows() {
            0 => vec![0.0; self.state_size()],
            l => states.row(l - 1).to_vec(),
        })
    }

    /// Splits `C m` into the decoded element and the previous state.
    pub fn decode_step(&self, m: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = self.decoder.matvec(m)?;
        let prev = out.split_off(self.input_size());
        Ok((out, prev))
    }

    /// Decodes `l` elements from `m_final`, returned in forward time order.
    pub fn reconstruct(&self, m_final: &[f64], l: usize) -> Result<Matrix> {
        if l == 0 {
            return Err(Error::Precondition("reconstruction length must be >= 1".into()));
        }
        let a = self.input_size();
        let mut out = Matrix::zeros(l, a);
        let mut m = m_final.to_vec();
        for t in (0..l).rev() {
            let (x, prev) = self.decode_step(&m)?;
            out.row_mut(t).copy_from_slice(&x);
            m = prev;
        }
        Ok(out)
    }

    /// Max-abs error of encode-then-reconstruct on `sequence`.
    pub fn reconstruction_error(&self, sequence: &Matrix) -> Result<f64> {
        if sequence.rows() == 0 {
            return Ok(0.0);
        }
        let m = self.encode_final(sequence)?;
        Ok(self.reconstruct(&m, sequence.rows())?.max_abs_diff(sequence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::build_selectors;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(l: usize, a: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(l, a, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn data_matrix_rows_hold_reversed_prefixes() {
        let s = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let d = build_data_matrix(&[s]).unwrap();
        assert_eq!(d.xi.row(2), &[3.0, 2.0, 1.0]);
        assert_eq!(d.xi.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(d.row_map, vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn data_matrix_single_step() {
        let s = Matrix::from_rows(&[[4.0, 5.0]]).unwrap();
        let d = build_data_matrix(std::slice::from_ref(&s)).unwrap();
        assert_eq!(d.xi, s);
    }

    #[test]
    fn data_matrix_pads_short_sequences() {
        // lengths 2 and 3, a = 1: the stacked states of a random encoder equal Ξ Ω.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let seqs = vec![random_seq(2, 1, &mut rng), random_seq(3, 1, &mut rng)];
        let d = build_data_matrix(&seqs).unwrap();
        assert_eq!(d.xi.shape(), (5, 3));
        assert_eq!(d.xi[(0, 2)], 0.0);
        assert_eq!(d.xi[(1, 2)], 0.0);

        let p = 2;
        let a_mat = random_seq(p, 1, &mut rng);
        let b_mat = random_seq(p, p, &mut rng);
        let model = LaesModel::new(a_mat.clone(), b_mat.clone(), Matrix::zeros(1 + p, p)).unwrap();
        // Ω = [Aᵀ; AᵀBᵀ; AᵀB²ᵀ]
        let mut omega = Matrix::zeros(0, p);
        let mut power = Matrix::identity(p);
        for _ in 0..3 {
            omega = omega.vstack(&power.matmul(&a_mat).unwrap().transpose()).unwrap();
            power = b_mat.matmul(&power).unwrap();
        }
        let predicted = d.xi.matmul(&omega).unwrap();
        let stacked = model
            .encode(&seqs[0])
            .unwrap()
            .vstack(&model.encode(&seqs[1]).unwrap())
            .unwrap();
        assert!(predicted.max_abs_diff(&stacked) < 1e-14);
    }

    #[test]
    fn data_matrix_errors() {
        assert!(matches!(build_data_matrix(&[]), Err(Error::EmptyInput(_))));
        let mixed = vec![Matrix::zeros(2, 1), Matrix::zeros(2, 2)];
        assert!(matches!(build_data_matrix(&mixed), Err(Error::Dimension(_))));
    }

    #[test]
    fn basis_construction_matches_selector_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seq = random_seq(4, 2, &mut rng);
        let xi = build_data_matrix(&[seq]).unwrap().xi;
        let u = truncated_svd(&xi, 3).unwrap().v;
        let sel = build_selectors(4, 2).unwrap();
        let model = LaesModel::from_basis(&u, 2);
        let a = u.t_matmul(&sel.p).unwrap();
        let b = u.t_matmul(&sel.r.matmul(&u).unwrap()).unwrap();
        assert!(model.encoder_input.max_abs_diff(&a) < 1e-15);
        assert!(model.encoder_state.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn full_rank_fit_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = random_seq(6, 2, &mut rng);
        let model = fit_laes(std::slice::from_ref(&seq), 6, false).unwrap();
        assert!(model.reconstruction_error(&seq).unwrap() < 1e-8);
        // decoder is [Aᵀ; Bᵀ]
        let stacked = model
            .encoder_input
            .transpose()
            .vstack(&model.encoder_state.transpose())
            .unwrap();
        assert!(model.decoder.max_abs_diff(&stacked) < 1e-15);
    }

    #[test]
    fn single_element_roundtrip() {
        let x = Matrix::from_rows(&[[0.3, -1.2, 2.0]]).unwrap();
        let model = fit_laes(std::slice::from_ref(&x), 1, false).unwrap();
        let m = model.encode_final(&x).unwrap();
        let (decoded, _) = model.decode_step(&m).unwrap();
        for (d, e) in decoded.iter().zip(x.row(0)) {
            assert!((d - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_inputs_and_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seq = random_seq(5, 2, &mut rng);
        let model = fit_laes(&[seq], 4, false).unwrap();
        let z = model.encode(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(z, Matrix::zeros(3, 4));
        let (x, m) = model.decode_step(&[0.0; 4]).unwrap();
        assert_eq!(x, vec![0.0; 2]);
        assert_eq!(m, vec![0.0; 4]);
        assert!(model.decode_step(&[0.0; 3]).is_err());
        assert!(model.encode(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn encode_matches_unrolled_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_seq(3, 2, &mut rng);
        let b = random_seq(3, 3, &mut rng);
        let model = LaesModel::new(a.clone(), b.clone(), Matrix::zeros(5, 3)).unwrap();
        let s = random_seq(3, 2, &mut rng);
        let m = model.encode(&s).unwrap();
        let ax3 = a.matvec(s.row(2)).unwrap();
        let bax2 = b.matvec(&a.matvec(s.row(1)).unwrap()).unwrap();
        let bbax1 = b.matvec(&b.matvec(&a.matvec(s.row(0)).unwrap()).unwrap()).unwrap();
        for i in 0..3 {
            assert!((m[(2, i)] - (ax3[i] + bax2[i] + bbax1[i])).abs() < 1e-14);
        }
        let first = a.matvec(s.row(0)).unwrap();
        assert_eq!(m.row(0), first.as_slice());
    }

    #[test]
    fn repeated_decoding_reverses_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = random_seq(5, 1, &mut rng);
        let model = fit_laes(std::slice::from_ref(&s), 5, false).unwrap();
        let mut m = model.encode_final(&s).unwrap();
        for t in (0..5).rev() {
            let (x, prev) = model.decode_step(&m).unwrap();
            assert!((x[0] - s[(t, 0)]).abs() < 1e-8);
            m = prev;
        }
    }

    #[test]
    fn truncation_error_shrinks_with_state_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let corpus: Vec<Matrix> = (0..3).map(|_| random_seq(6, 2, &mut rng)).collect();
        let mut last = f64::INFINITY;
        for p in 1..=12 {
            let model = fit_laes(&corpus, p, false).unwrap();
            let err: f64 = corpus
                .iter()
                .map(|s| {
                    let m = model.encode_final(s).unwrap();
                    let r = model.reconstruct(&m, s.rows()).unwrap();
                    r.sub(s).unwrap().frobenius_norm().powi(2)
                })
                .sum();
            assert!(err <= last + 1e-10, "p={p}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-16);
    }

    #[test]
    fn slice_and_dense_fits_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let corpus: Vec<Matrix> = vec![random_seq(5, 2, &mut rng), random_seq(3, 2, &mut rng)];
        let dense = fit_laes(&corpus, 8, false).unwrap();
        let sliced = fit_laes(&corpus, 8, true).unwrap();
        for s in &corpus {
            let a = dense.reconstruction_error(s).unwrap();
            let b = sliced.reconstruction_error(s).unwrap();
            assert!(a < 1e-10 && b < 1e-10);
        }
    }

    #[test]
    fn state_size_out_of_range() {
        let s = Matrix::zeros(3, 1);
        assert!(matches!(
            fit_laes(std::slice::from_ref(&s), 0, false),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(fit_laes(&[s], 4, false), Err(Error::Dimension(_))));
    }
}
