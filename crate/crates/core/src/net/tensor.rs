//! Minimal channels-last tensor with the valid-convolution kernels the
//! network is built from.

use rayon::prelude::*;

use super::{ConvLayer, KERNEL_SIZE};

/// Dense `h x w x c` tensor, channels-last (channel index contiguous).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tensor3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Tensor3 {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    #[cfg(test)]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }
}

/// One output row of a valid convolution, written into `out_row`
/// (length `ow * out_maps`).
#[inline]
fn conv_row(input: &Tensor3, layer: &ConvLayer, y: usize, out_row: &mut [f64]) {
    let (ic, oc) = (layer.in_maps, layer.out_maps);
    let ow = input.w - (KERNEL_SIZE - 1);
    let weights = layer.weights();
    for x in 0..ow {
        let out_px = &mut out_row[x * oc..(x + 1) * oc];
        out_px.copy_from_slice(layer.bias());
        for ky in 0..KERNEL_SIZE {
            let in_row = (y + ky) * input.w;
            for kx in 0..KERNEL_SIZE {
                let in_base = (in_row + x + kx) * ic;
                let w_base = (ky * KERNEL_SIZE + kx) * ic * oc;
                for i in 0..ic {
                    let v = input.data[in_base + i];
                    let w_row = &weights[w_base + i * oc..w_base + (i + 1) * oc];
                    for (o, wv) in w_row.iter().enumerate() {
                        out_px[o] += v * wv;
                    }
                }
            }
        }
    }
}

/// Valid (no padding) convolution; returns pre-activations.
pub(crate) fn conv_valid(input: &Tensor3, layer: &ConvLayer) -> Tensor3 {
    debug_assert_eq!(input.c, layer.in_maps);
    let oh = input.h - (KERNEL_SIZE - 1);
    let ow = input.w - (KERNEL_SIZE - 1);
    let mut out = Tensor3::zeros(oh, ow, layer.out_maps);
    for (y, row) in out.data.chunks_exact_mut(ow * layer.out_maps).enumerate() {
        conv_row(input, layer, y, row);
    }
    out
}

/// Row-parallel variant of [`conv_valid`] for whole-image inference.
/// Produces bit-identical results; rows are independent.
pub(crate) fn conv_valid_par(input: &Tensor3, layer: &ConvLayer) -> Tensor3 {
    debug_assert_eq!(input.c, layer.in_maps);
    let oh = input.h - (KERNEL_SIZE - 1);
    let ow = input.w - (KERNEL_SIZE - 1);
    let mut out = Tensor3::zeros(oh, ow, layer.out_maps);
    out.data
        .par_chunks_exact_mut(ow * layer.out_maps)
        .enumerate()
        .for_each(|(y, row)| conv_row(input, layer, y, row));
    out
}

pub(crate) fn relu_inplace(t: &mut Tensor3) {
    for v in t.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
