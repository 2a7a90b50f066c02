//! Small convolutional stack: 3x3 "same" convolutions with ReLU, average
//! pooling between blocks, global average pooling after the last block and a
//! logistic head. With the default (2x4) pooling the first block maps the
//! 128x256 input to 64x64 feature maps.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{FrameModel, INPUT_COLS, INPUT_ROWS};

#[derive(Debug, Clone)]
struct Block {
    cin: usize,
    cout: usize,
    /// Offset of the weights in the parameter vector; biases follow.
    offset: usize,
    /// Spatial size of the block input.
    h: usize,
    w: usize,
    /// Pooling after the block; `None` means global average.
    pool: Option<[usize; 2]>,
}

impl Block {
    fn n_weights(&self) -> usize {
        self.cout * self.cin * 9
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceConv {
    blocks: Vec<Block>,
    head_offset: usize,
    params: Vec<f64>,
}

struct Trace {
    /// Input to each block.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each block.
    pre: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

fn conv_forward(input: &[f64], b: &Block, params: &[f64]) -> Vec<f64> {
    let (h, w) = (b.h, b.w);
    let weights = &params[b.offset..b.offset + b.n_weights()];
    let bias = &params[b.offset + b.n_weights()..b.offset + b.n_weights() + b.cout];
    let mut out = vec![0.0; b.cout * h * w];
    for o in 0..b.cout {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias[o]);
        for i in 0..b.cin {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = weights[((o * b.cin + i) * 3 + ky) * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (dy, dx) = (ky as isize - 1, kx as isize - 1);
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += k * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and, if requested, the input gradient.
fn conv_backward(
    input: &[f64],
    dout: &[f64],
    b: &Block,
    params: &[f64],
    grad: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let (h, w) = (b.h, b.w);
    let nw = b.n_weights();
    for o in 0..b.cout {
        let g = &dout[o * h * w..(o + 1) * h * w];
        grad[b.offset + nw + o] += g.iter().sum::<f64>();
        for i in 0..b.cin {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * b.cin + i) * 3 + ky) * 3 + kx;
                    let (dy, dx) = (ky as isize - 1, kx as isize - 1);
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let mut acc = 0.0;
                    let k = params[b.offset + widx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let gs = &g[y * w + x0..y * w + x1];
                        let s0 = sy * w + (x0 as isize + dx) as usize;
                        let s = &src[s0..s0 + (x1 - x0)];
                        for (gv, sv) in gs.iter().zip(s) {
                            acc += gv * sv;
                        }
                        if let Some(d) = din.as_deref_mut() {
                            let dst = &mut d[i * h * w + s0..i * h * w + s0 + (x1 - x0)];
                            for (dv, gv) in dst.iter_mut().zip(gs) {
                                *dv += k * gv;
                            }
                        }
                    }
                    grad[b.offset + widx] += acc;
                }
            }
        }
    }
}

fn avg_pool(x: &[f64], c: usize, h: usize, w: usize, [ph, pw]: [usize; 2]) -> Vec<f64> {
    let (oh, ow) = (h / ph, w / pw);
    let norm = 1.0 / (ph * pw) as f64;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                out[ch * oh * ow + (y / ph) * ow + xx / pw] += x[ch * h * w + y * w + xx] * norm;
            }
        }
    }
    out
}

fn avg_pool_backward(dout: &[f64], c: usize, h: usize, w: usize, [ph, pw]: [usize; 2]) -> Vec<f64> {
    let (oh, ow) = (h / ph, w / pw);
    let norm = 1.0 / (ph * pw) as f64;
    let mut din = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                din[ch * h * w + y * w + xx] = dout[ch * oh * ow + (y / ph) * ow + xx / pw] * norm;
            }
        }
    }
    din
}

impl ReferenceConv {
    pub fn new(widths: &[usize], pooling: &[[usize; 2]], seed: u64) -> Self {
        let mut blocks = Vec::with_capacity(widths.len());
        let (mut h, mut w, mut cin, mut offset) = (INPUT_ROWS, INPUT_COLS, 1, 0);
        for (i, &cout) in widths.iter().enumerate() {
            let pool = pooling.get(i).copied();
            let b = Block {
                cin,
                cout,
                offset,
                h,
                w,
                pool,
            };
            offset += b.n_weights() + cout;
            if let Some([ph, pw]) = pool {
                h /= ph;
                w /= pw;
            }
            cin = cout;
            blocks.push(b);
        }
        let head_offset = offset;
        let mut params = vec![0.0; head_offset + cin + 1];
        let mut rng = crate::seed::rng(seed);
        for b in &blocks {
            let std = (2.0 / (b.cin * 9) as f64).sqrt();
            for p in &mut params[b.offset..b.offset + b.n_weights()] {
                *p = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        ReferenceConv {
            blocks,
            head_offset,
            params,
        }
    }

    /// Spatial size after the first block's pooling.
    pub fn first_feature_map(&self) -> (usize, usize) {
        self.blocks
            .get(1)
            .map(|b| (b.h, b.w))
            .unwrap_or((1, 1))
    }

    fn forward(&self, x: &[f32]) -> (f64, Trace) {
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut pre = Vec::with_capacity(self.blocks.len());
        let mut cur: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut pooled = Vec::new();
        for b in &self.blocks {
            let z = conv_forward(&cur, b, &self.params);
            let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            inputs.push(std::mem::take(&mut cur));
            pre.push(z);
            match b.pool {
                Some(p) => cur = avg_pool(&a, b.cout, b.h, b.w, p),
                None => {
                    let hw = (b.h * b.w) as f64;
                    pooled = a.chunks(b.h * b.w).map(|c| c.iter().sum::<f64>() / hw).collect();
                }
            }
        }
        let head = &self.params[self.head_offset..];
        let c = pooled.len();
        let logit = head[c] + pooled.iter().zip(&head[..c]).map(|(a, w)| a * w).sum::<f64>();
        (logit, Trace { inputs, pre, pooled })
    }
}

impl FrameModel for ReferenceConv {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logit(&self, x: &[f32]) -> f64 {
        self.forward(x).0
    }

    fn accumulate_grad(&self, x: &[f32], dlogit: f64, grad: &mut [f64]) {
        let (_, trace) = self.forward(x);
        let c = trace.pooled.len();
        let head = &self.params[self.head_offset..];
        for (k, a) in trace.pooled.iter().enumerate() {
            grad[self.head_offset + k] += dlogit * a;
        }
        grad[self.head_offset + c] += dlogit;

        // Gradient w.r.t. the post-activation output of the current block.
        let mut dact: Vec<f64> = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate().rev() {
            let hw = b.h * b.w;
            if b.pool.is_none() {
                dact = (0..b.cout * hw)
                    .map(|i| dlogit * head[i / hw] / hw as f64)
                    .collect();
            }
            let dpre: Vec<f64> = dact
                .iter()
                .zip(&trace.pre[bi])
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                .collect();
            if bi == 0 {
                conv_backward(&trace.inputs[0], &dpre, b, &self.params, grad, None);
            } else {
                let mut din = vec![0.0; b.cin * hw];
                conv_backward(&trace.inputs[bi], &dpre, b, &self.params, grad, Some(&mut din));
                let prev = &self.blocks[bi - 1];
                dact = avg_pool_backward(&din, prev.cout, prev.h, prev.w, prev.pool.unwrap());
            }
        }
    }
}
