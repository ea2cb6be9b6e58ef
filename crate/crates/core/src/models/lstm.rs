use crate::numkit::matrix::{axpy, dot, matvec_t_acc, outer_acc};
use crate::numkit::{sigmoid, Matrix, ParamStore, Rng, SlotId};
use crate::{Error, Result};

/// Peephole LSTM layer.
///
/// Gate pre-activations are stacked in the order input, forget, cell,
/// output: `wx` is 4H × in, `wh` is 4H × H, `bias` is 1 × 4H. `peep` is
/// 3 × H holding the diagonal peephole weights of the input, forget and
/// output gates. The output gate reads the updated cell state:
///
/// ```text
/// i = σ(Wxi x + Whi h₋ + wci ⊙ c₋ + bi)
/// f = σ(Wxf x + Whf h₋ + wcf ⊙ c₋ + bf)
/// c = f ⊙ c₋ + i ⊙ tanh(Wxc x + Whc h₋ + bc)
/// o = σ(Wxo x + Who h₋ + wco ⊙ c + bo)
/// h = o ⊙ tanh(c)
/// ```
#[derive(Debug, Clone, Copy)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    pub wx: SlotId,
    pub wh: SlotId,
    pub peep: SlotId,
    pub bias: SlotId,
}

/// Forward intermediates of one sequence, flat T × H buffers.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub steps: usize,
    pub hidden: usize,
    xs: Vec<f64>,
    input: usize,
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_o: Vec<f64>,
    cand: Vec<f64>,
    pub cell: Vec<f64>,
    tanh_cell: Vec<f64>,
    pub hs: Vec<f64>,
}

impl LstmCache {
    pub fn h(&self, t: usize) -> &[f64] {
        &self.hs[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn c(&self, t: usize) -> &[f64] {
        &self.cell[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn last_h(&self) -> &[f64] {
        self.h(self.steps - 1)
    }
}

impl LstmLayer {
    /// Glorot weights, zero peepholes, zero biases except forget gate +1.
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let wx = store.add_glorot(format!("{prefix}.wx"), 4 * hidden, input, rng)?;
        let wh = store.add_glorot(format!("{prefix}.wh"), 4 * hidden, hidden, rng)?;
        let peep = store.add_zeros(format!("{prefix}.peep"), 3, hidden)?;
        let mut b = Matrix::zeros(1, 4 * hidden);
        b.as_mut_slice()[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{prefix}.bias"), b)?;
        Ok(Self {
            input,
            hidden,
            wx,
            wh,
            peep,
            bias,
        })
    }

    /// Re-binds a layer to slots already present in `store`.
    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .ok_or_else(|| Error::Format(format!("missing parameter {prefix}.{s}")))
        };
        let (wx, wh, peep, bias) = (get("wx")?, get("wh")?, get("peep")?, get("bias")?);
        let (h4, input) = store.value(wx).shape();
        Ok(Self {
            input,
            hidden: h4 / 4,
            wx,
            wh,
            peep,
            bias,
        })
    }

    /// Runs the layer over `steps` inputs stored contiguously in `xs`
    /// (steps × input). `h₀ = c₀ = 0`.
    pub fn forward(&self, store: &ParamStore, xs: &[f64], steps: usize) -> Result<LstmCache> {
        if steps == 0 {
            return Err(Error::Domain("LSTM over an empty sequence".into()));
        }
        if xs.len() != steps * self.input {
            return Err(Error::Dimension {
                op: "lstm forward",
                left: (steps, self.input),
                right: (xs.len(), 1),
            });
        }
        let h = self.hidden;
        let wx = store.value(self.wx).as_slice();
        let wh = store.value(self.wh).as_slice();
        let peep = store.value(self.peep).as_slice();
        let bias = store.value(self.bias).as_slice();
        let (pi, pf, po) = (&peep[..h], &peep[h..2 * h], &peep[2 * h..]);

        let n = steps * h;
        let mut cache = LstmCache {
            steps,
            hidden: h,
            xs: xs.to_vec(),
            input: self.input,
            gate_i: vec![0.0; n],
            gate_f: vec![0.0; n],
            gate_o: vec![0.0; n],
            cand: vec![0.0; n],
            cell: vec![0.0; n],
            tanh_cell: vec![0.0; n],
            hs: vec![0.0; n],
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut pre = vec![0.0; 4 * h];
        for t in 0..steps {
            let x = &xs[t * self.input..(t + 1) * self.input];
            for (r, p) in pre.iter_mut().enumerate() {
                *p = bias[r]
                    + dot(&wx[r * self.input..(r + 1) * self.input], x)
                    + dot(&wh[r * h..(r + 1) * h], &h_prev);
            }
            let base = t * h;
            for k in 0..h {
                let i = sigmoid(pre[k] + pi[k] * c_prev[k]);
                let f = sigmoid(pre[h + k] + pf[k] * c_prev[k]);
                let g = pre[2 * h + k].tanh();
                let c = f * c_prev[k] + i * g;
                let o = sigmoid(pre[3 * h + k] + po[k] * c);
                let tc = c.tanh();
                cache.gate_i[base + k] = i;
                cache.gate_f[base + k] = f;
                cache.cand[base + k] = g;
                cache.cell[base + k] = c;
                cache.gate_o[base + k] = o;
                cache.tanh_cell[base + k] = tc;
                cache.hs[base + k] = o * tc;
                c_prev[k] = c;
                h_prev[k] = o * tc;
            }
        }
        Ok(cache)
    }

    /// One step from an explicit state, for incremental decoding. Returns
    /// `(h, c)`.
    pub fn step(&self, store: &ParamStore, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let wx = store.value(self.wx).as_slice();
        let wh = store.value(self.wh).as_slice();
        let peep = store.value(self.peep).as_slice();
        let bias = store.value(self.bias).as_slice();
        let mut pre = vec![0.0; 4 * h];
        for (r, p) in pre.iter_mut().enumerate() {
            *p = bias[r] + dot(&wx[r * self.input..(r + 1) * self.input], x) + dot(&wh[r * h..(r + 1) * h], h_prev);
        }
        let mut hn = vec![0.0; h];
        let mut cn = vec![0.0; h];
        for k in 0..h {
            let i = sigmoid(pre[k] + peep[k] * c_prev[k]);
            let f = sigmoid(pre[h + k] + peep[h + k] * c_prev[k]);
            let c = f * c_prev[k] + i * pre[2 * h + k].tanh();
            let o = sigmoid(pre[3 * h + k] + peep[2 * h + k] * c);
            cn[k] = c;
            hn[k] = o * c.tanh();
        }
        (hn, cn)
    }

    /// Backpropagation through time. `dh` holds the loss gradient arriving at
    /// each hidden state (steps × H, zeros where nothing arrives). Parameter
    /// gradients are accumulated into `store`; the input gradients are
    /// returned (steps × input).
    pub fn backward(&self, store: &mut ParamStore, cache: &LstmCache, dh: &[f64]) -> Vec<f64> {
        let h = self.hidden;
        let steps = cache.steps;
        debug_assert_eq!(dh.len(), steps * h);
        let mut dx = vec![0.0; steps * self.input];
        let mut dwx = std::mem::replace(store.grad_mut(self.wx), Matrix::zeros(0, 0));
        let mut dwh = std::mem::replace(store.grad_mut(self.wh), Matrix::zeros(0, 0));
        let mut dpeep = std::mem::replace(store.grad_mut(self.peep), Matrix::zeros(0, 0));
        let mut dbias = std::mem::replace(store.grad_mut(self.bias), Matrix::zeros(0, 0));
        {
            let wx = store.value(self.wx).as_slice();
            let wh = store.value(self.wh).as_slice();
            let peep = store.value(self.peep).as_slice();
            let (pi, pf, po) = (&peep[..h], &peep[h..2 * h], &peep[2 * h..]);
            let zeros = vec![0.0; h];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut da = vec![0.0; 4 * h];
            for t in (0..steps).rev() {
                let base = t * h;
                let c_prev = if t == 0 { &zeros[..] } else { &cache.cell[base - h..base] };
                let h_prev = if t == 0 { &zeros[..] } else { &cache.hs[base - h..base] };
                let dpe = dpeep.as_mut_slice();
                let mut dc_prev = vec![0.0; h];
                for k in 0..h {
                    let (i, f, g, o) = (
                        cache.gate_i[base + k],
                        cache.gate_f[base + k],
                        cache.cand[base + k],
                        cache.gate_o[base + k],
                    );
                    let c = cache.cell[base + k];
                    let tc = cache.tanh_cell[base + k];
                    let dht = dh[base + k] + dh_next[k];
                    let dao = dht * tc * o * (1.0 - o);
                    let dc = dc_next[k] + dht * o * (1.0 - tc * tc) + dao * po[k];
                    let dai = dc * g * i * (1.0 - i);
                    let dag = dc * i * (1.0 - g * g);
                    let daf = dc * c_prev[k] * f * (1.0 - f);
                    dpe[k] += dai * c_prev[k];
                    dpe[h + k] += daf * c_prev[k];
                    dpe[2 * h + k] += dao * c;
                    dc_prev[k] = dc * f + dai * pi[k] + daf * pf[k];
                    da[k] = dai;
                    da[h + k] = daf;
                    da[2 * h + k] = dag;
                    da[3 * h + k] = dao;
                }
                let x = &cache.xs[t * cache.input..(t + 1) * cache.input];
                outer_acc(&da, x, dwx.as_mut_slice());
                outer_acc(&da, h_prev, dwh.as_mut_slice());
                axpy(1.0, &da, dbias.as_mut_slice());
                matvec_t_acc(wx, &da, &mut dx[t * self.input..(t + 1) * self.input]);
                dh_next.fill(0.0);
                matvec_t_acc(wh, &da, &mut dh_next);
                dc_next = dc_prev;
            }
        }
        *store.grad_mut(self.wx) = dwx;
        *store.grad_mut(self.wh) = dwh;
        *store.grad_mut(self.peep) = dpeep;
        *store.grad_mut(self.bias) = dbias;
        dx
    }
}
