//! LSTM forward pass and backpropagation through time.
//!
//! Per step, with `z = x·K + h·R + b` split into four blocks:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = act(z_c)   o = σ(z_o)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ act(c')
//! ```

use super::layer::{sigmoid, Activation};
use super::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct LstmCache<F> {
    steps: usize,
    in_dim: usize,
    units: usize,
    x: Vec<F>,
    /// `(steps + 1) × units`, row 0 is the zero initial state.
    h: Vec<F>,
    c: Vec<F>,
    /// Activated gates `steps × 4·units`.
    gates: Vec<F>,
    /// `act(c)` per step, `steps × units`.
    act_c: Vec<F>,
}

impl<F: Real> LstmCache<F> {
    pub fn output(&self, return_sequences: bool) -> Vec<F> {
        if return_sequences {
            self.h[self.units..].to_vec()
        } else {
            self.h[self.steps * self.units..].to_vec()
        }
    }

    pub(crate) fn kink_pattern(&self, out: &mut Vec<u64>) {
        let u = self.units;
        for t in 0..self.steps {
            let g = &self.gates[t * 4 * u + 2 * u..t * 4 * u + 3 * u];
            out.extend(g.iter().map(|&v| u64::from(v > F::zero())));
        }
        out.extend(self.act_c.iter().map(|&v| u64::from(v > F::zero())));
    }
}

pub fn forward<F: Real>(
    x: &[F],
    steps: usize,
    in_dim: usize,
    units: usize,
    act: Activation,
    params: &[Tensor<F>],
) -> LstmCache<F> {
    let (k, r, b) = (params[0].data(), params[1].data(), params[2].data());
    let g4 = 4 * units;
    let mut h = vec![F::zero(); (steps + 1) * units];
    let mut c = vec![F::zero(); (steps + 1) * units];
    let mut gates = vec![F::zero(); steps * g4];
    let mut act_c = vec![F::zero(); steps * units];
    let mut z = vec![F::zero(); g4];
    for t in 0..steps {
        z.copy_from_slice(b);
        for d in 0..in_dim {
            let xv = x[t * in_dim + d];
            for (zj, &w) in z.iter_mut().zip(&k[d * g4..(d + 1) * g4]) {
                *zj += xv * w;
            }
        }
        for u in 0..units {
            let hv = h[t * units + u];
            for (zj, &w) in z.iter_mut().zip(&r[u * g4..(u + 1) * g4]) {
                *zj += hv * w;
            }
        }
        let gt = &mut gates[t * g4..(t + 1) * g4];
        for j in 0..units {
            gt[j] = sigmoid(z[j]);
            gt[units + j] = sigmoid(z[units + j]);
            gt[2 * units + j] = act.apply(z[2 * units + j]);
            gt[3 * units + j] = sigmoid(z[3 * units + j]);
        }
        for j in 0..units {
            let (i, f, g, o) = (gt[j], gt[units + j], gt[2 * units + j], gt[3 * units + j]);
            let cn = f * c[t * units + j] + i * g;
            let ac = act.apply(cn);
            c[(t + 1) * units + j] = cn;
            act_c[t * units + j] = ac;
            h[(t + 1) * units + j] = o * ac;
        }
    }
    LstmCache {
        steps,
        in_dim,
        units,
        x: x.to_vec(),
        h,
        c,
        gates,
        act_c,
    }
}

/// BPTT. `dy` is the gradient of the layer output (`[steps, units]` when
/// sequences are returned, else `[units]` for the last step).
pub fn backward<F: Real>(
    cache: &LstmCache<F>,
    dy: &[F],
    units: usize,
    act: Activation,
    return_sequences: bool,
    params: &[Tensor<F>],
    grads: &mut [Tensor<F>],
) -> Vec<F> {
    let (steps, in_dim) = (cache.steps, cache.in_dim);
    let g4 = 4 * units;
    let (k, r) = (params[0].data(), params[1].data());
    let [gk, gr, gb] = grads else {
        unreachable!("lstm has three parameter tensors")
    };
    let (gk, gr, gb) = (gk.data_mut(), gr.data_mut(), gb.data_mut());

    let mut dx = vec![F::zero(); steps * in_dim];
    let mut dh_next = vec![F::zero(); units];
    let mut dc_next = vec![F::zero(); units];
    let mut dz = vec![F::zero(); g4];
    let one = F::one();

    for t in (0..steps).rev() {
        let gt = &cache.gates[t * g4..(t + 1) * g4];
        for j in 0..units {
            let mut dh = dh_next[j];
            if return_sequences {
                dh += dy[t * units + j];
            } else if t + 1 == steps {
                dh += dy[j];
            }
            let (i, f, g, o) = (gt[j], gt[units + j], gt[2 * units + j], gt[3 * units + j]);
            let ac = cache.act_c[t * units + j];
            let c_prev = cache.c[t * units + j];
            let dc = dh * o * act.grad_from_output(ac) + dc_next[j];
            dz[j] = dc * g * i * (one - i);
            dz[units + j] = dc * c_prev * f * (one - f);
            dz[2 * units + j] = dc * i * act.grad_from_output(g);
            dz[3 * units + j] = dh * ac * o * (one - o);
            dc_next[j] = dc * f;
        }
        for (b, &d) in gb.iter_mut().zip(&dz) {
            *b += d;
        }
        for d in 0..in_dim {
            let xv = cache.x[t * in_dim + d];
            let row = &k[d * g4..(d + 1) * g4];
            let grow = &mut gk[d * g4..(d + 1) * g4];
            let mut acc = F::zero();
            for j in 0..g4 {
                grow[j] += xv * dz[j];
                acc += row[j] * dz[j];
            }
            dx[t * in_dim + d] = acc;
        }
        for u in 0..units {
            let hv = cache.h[t * units + u];
            let row = &r[u * g4..(u + 1) * g4];
            let grow = &mut gr[u * g4..(u + 1) * g4];
            let mut acc = F::zero();
            for j in 0..g4 {
                grow[j] += hv * dz[j];
                acc += row[j] * dz[j];
            }
            dh_next[u] = acc;
        }
    }
    dx
}
