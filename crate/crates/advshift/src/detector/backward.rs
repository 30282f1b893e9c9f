//! Exact gradients with respect to parameters and input pixels.
//!
//! Backpropagation mirrors the forward layer chain and is split at the
//! F1/F2 boundary so the trainer can inject feature-alignment gradients
//! between the two stages.

use rayon::prelude::*;

use crate::dataset::BoxLabel;
use crate::detector::config::DetectorConfig;
use crate::detector::forward::{forward_trace, ForwardTrace, RawPrediction};
use crate::detector::loss::{loss_with_grad, LossBreakdown, TaskLoss};
use crate::detector::params::DetectorParams;
use crate::error::Result;
use crate::image::Image;
use crate::nn::{activation_backward, conv3x3_backward_input, conv3x3_grad_params};
use crate::tensor::Tensor3;

/// Backpropagates layers `[from, to)` in reverse. `upstream` is the gradient
/// w.r.t. the post-activation output of layer `to - 1`. Parameter gradients
/// accumulate into `grads`; the return value is the gradient w.r.t. the
/// input of layer `from`.
fn backprop_layers(
    params: &DetectorParams,
    input: &Tensor3,
    trace: &ForwardTrace,
    mut upstream: Tensor3,
    from: usize,
    to: usize,
    grads: &mut [f64],
) -> Tensor3 {
    debug_assert_eq!(grads.len(), params.layout.total_params);
    for i in (from..to).rev() {
        let layer = &params.layout.layers[i];
        let post = &trace.activations[i];
        activation_backward(&mut upstream, post, layer.act);
        let layer_input = if i == 0 { input } else { &trace.activations[i - 1] };
        {
            let w_range = params.layout.w_range(i);
            let b_range = params.layout.b_range(i);
            // ranges are disjoint by construction
            let (gw, gb) = {
                let (head, tail) = grads.split_at_mut(b_range.start);
                (&mut head[w_range.clone()], &mut tail[..layer.cout])
            };
            conv3x3_grad_params(&upstream, layer_input, layer.stride, gw, gb);
        }
        upstream = conv3x3_backward_input(
            &upstream,
            params.layer_w(i),
            layer.cin,
            layer.in_h,
            layer.in_w,
            layer.stride,
        );
    }
    upstream
}

/// F2 backward: gradient w.r.t. raw prediction in, gradient w.r.t. the F1
/// feature map out.
pub fn backprop_f2(
    params: &DetectorParams,
    trace: &ForwardTrace,
    d_raw: Tensor3,
    grads: &mut [f64],
) -> Tensor3 {
    let f1 = params.layout.f1_layers;
    let n = params.layout.layers.len();
    // `input` is unused for layers >= 1; pass the feature map.
    backprop_layers(params, &trace.activations[f1 - 1], trace, d_raw, f1, n, grads)
}

/// F1 backward: gradient w.r.t. the feature map in, gradient w.r.t. the
/// input image out.
pub fn backprop_f1(
    params: &DetectorParams,
    input: &Tensor3,
    trace: &ForwardTrace,
    d_feature: Tensor3,
    grads: &mut [f64],
) -> Tensor3 {
    backprop_layers(
        params,
        input,
        trace,
        d_feature,
        0,
        params.layout.f1_layers,
        grads,
    )
}

/// Per-sample losses plus full parameter gradient and input-pixel gradient.
pub fn sample_gradients(
    params: &DetectorParams,
    config: &DetectorConfig,
    image: &Image,
    labels: &[BoxLabel],
    selector: TaskLoss,
) -> Result<(LossBreakdown, Vec<f64>, Tensor3)> {
    let trace = forward_trace(params, &image.pixels)?;
    let raw = RawPrediction::new(trace.raw().clone(), config);
    let (breakdown, d_raw) = loss_with_grad(&raw, labels, config, Some(selector))?;
    let mut grads = vec![0.0; params.layout.total_params];
    let d_feat = backprop_f2(params, &trace, d_raw.expect("gradient requested"), &mut grads);
    let d_input = backprop_f1(params, &image.pixels, &trace, d_feat, &mut grads);
    Ok((breakdown, grads, d_input))
}

/// Gradient of the selected loss with respect to the input pixels.
pub fn input_gradient(
    params: &DetectorParams,
    config: &DetectorConfig,
    image: &Image,
    labels: &[BoxLabel],
    selector: TaskLoss,
) -> Result<Tensor3> {
    let (_, _, d_input) = sample_gradients(params, config, image, labels, selector)?;
    Ok(d_input)
}

/// Mean parameter gradient and mean losses over a batch. Per-sample work is
/// parallel; the reduction runs in index order so results are independent of
/// worker count.
pub fn param_gradients(
    params: &DetectorParams,
    config: &DetectorConfig,
    batch: &[(&Image, &[BoxLabel])],
    selector: TaskLoss,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if batch.is_empty() {
        return Err(crate::error::Error::Validation(
            "empty batch has no gradient".into(),
        ));
    }
    let per_sample: Vec<Result<(LossBreakdown, Vec<f64>)>> = batch
        .par_iter()
        .map(|(image, labels)| {
            let (b, g, _) = sample_gradients(params, config, image, labels, selector)?;
            Ok((b, g))
        })
        .collect();

    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; params.layout.total_params];
    let mut mean = LossBreakdown::zero();
    for r in per_sample {
        let (b, g) = r?;
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += v * scale;
        }
        mean.l_det += b.l_det * scale;
        mean.l_cls += b.l_cls * scale;
        mean.l_loc += b.l_loc * scale;
        mean.l_obj += b.l_obj * scale;
    }
    Ok((mean, grads))
}
