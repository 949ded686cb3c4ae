//! Stride-1 2-D convolution over `[channels, height, width]` maps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding that preserves the spatial size.
    Same,
}

impl Padding {
    /// Leading and trailing zero rows for a kernel extent.
    pub fn amounts(self, k: usize) -> (usize, usize) {
        match self {
            Padding::Valid => (0, 0),
            Padding::Same => ((k - 1) / 2, k - 1 - (k - 1) / 2),
        }
    }
}

/// Geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub h: usize,
    pub w: usize,
    pub pad: Padding,
}

impl ConvGeom {
    pub fn padded(&self) -> (usize, usize, usize, usize) {
        let (pt, pb) = self.pad.amounts(self.kh);
        let (pl, pr) = self.pad.amounts(self.kw);
        (self.h + pt + pb, self.w + pl + pr, pt, pl)
    }

    /// Output height and width, `None` when the kernel does not fit.
    pub fn out_hw(&self) -> Option<(usize, usize)> {
        let (hp, wp, _, _) = self.padded();
        if self.kh > hp || self.kw > wp {
            return None;
        }
        Some((hp - self.kh + 1, wp - self.kw + 1))
    }

    pub fn n_weights(&self) -> usize {
        self.out_c * self.in_c * self.kh * self.kw
    }

    pub fn pad_input(&self, x: &[f64]) -> Vec<f64> {
        let (hp, wp, pt, pl) = self.padded();
        if hp == self.h && wp == self.w {
            return x.to_vec();
        }
        let mut out = vec![0.0; self.in_c * hp * wp];
        for c in 0..self.in_c {
            for y in 0..self.h {
                let src = &x[(c * self.h + y) * self.w..][..self.w];
                out[(c * hp + y + pt) * wp + pl..][..self.w].copy_from_slice(src);
            }
        }
        out
    }

    /// Pre-activation output `[out_c, ho, wo]` from a padded input.
    pub fn forward(&self, padded: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
        let (hp, wp, _, _) = self.padded();
        let (ho, wo) = self.out_hw().expect("checked at build time");
        let mut out = vec![0.0; self.out_c * ho * wo];
        for f in 0..self.out_c {
            let map = &mut out[f * ho * wo..(f + 1) * ho * wo];
            map.fill(bias[f]);
            for c in 0..self.in_c {
                let inp = &padded[c * hp * wp..(c + 1) * hp * wp];
                for ki in 0..self.kh {
                    for kj in 0..self.kw {
                        let wv = weights[((f * self.in_c + c) * self.kh + ki) * self.kw + kj];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..ho {
                            let src = &inp[(y + ki) * wp + kj..][..wo];
                            let dst = &mut map[y * wo..(y + 1) * wo];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients and returns the gradient with
    /// respect to the unpadded input.
    pub fn backward(
        &self,
        padded: &[f64],
        weights: &[f64],
        dz: &[f64],
        dweights: &mut [f64],
        dbias: &mut [f64],
    ) -> Vec<f64> {
        let (hp, wp, pt, pl) = self.padded();
        let (ho, wo) = self.out_hw().expect("checked at build time");
        let mut dpad = vec![0.0; self.in_c * hp * wp];
        for f in 0..self.out_c {
            let g = &dz[f * ho * wo..(f + 1) * ho * wo];
            dbias[f] += g.iter().sum::<f64>();
            for c in 0..self.in_c {
                let inp = &padded[c * hp * wp..(c + 1) * hp * wp];
                let dinp = &mut dpad[c * hp * wp..(c + 1) * hp * wp];
                for ki in 0..self.kh {
                    for kj in 0..self.kw {
                        let idx = ((f * self.in_c + c) * self.kh + ki) * self.kw + kj;
                        let wv = weights[idx];
                        let mut acc = 0.0;
                        for y in 0..ho {
                            let src = &inp[(y + ki) * wp + kj..][..wo];
                            let gr = &g[y * wo..(y + 1) * wo];
                            acc += src.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                            let dst = &mut dinp[(y + ki) * wp + kj..][..wo];
                            for (d, gv) in dst.iter_mut().zip(gr) {
                                *d += wv * gv;
                            }
                        }
                        dweights[idx] += acc;
                    }
                }
            }
        }
        if hp == self.h && wp == self.w {
            return dpad;
        }
        let mut dx = vec![0.0; self.in_c * self.h * self.w];
        for c in 0..self.in_c {
            for y in 0..self.h {
                dx[(c * self.h + y) * self.w..][..self.w]
                    .copy_from_slice(&dpad[(c * hp + y + pt) * wp + pl..][..self.w]);
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_on_ones_input_sums_to_nine() {
        let g = ConvGeom { in_c: 1, out_c: 1, kh: 3, kw: 3, h: 3, w: 3, pad: Padding::Valid };
        assert_eq!(g.out_hw(), Some((1, 1)));
        let out = g.forward(&[1.0; 9], &[1.0; 9], &[0.0]);
        assert_eq!(out, vec![9.0]);
    }

    #[test]
    fn same_padding_keeps_size() {
        let g = ConvGeom { in_c: 2, out_c: 3, kh: 3, kw: 3, h: 1, w: 4, pad: Padding::Same };
        assert_eq!(g.out_hw(), Some((1, 4)));
        let g = ConvGeom { h: 2, w: 2, pad: Padding::Valid, ..g };
        assert_eq!(g.out_hw(), None);
    }
}
