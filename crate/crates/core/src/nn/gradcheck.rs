//! Central finite-difference verification of `backward`.

use rand::Rng;

use super::model::{mse, mse_grad, ModelGraph, ParamBlock};
use super::{Activation, LayerSpec, NnError, Padding, Tensor};
use crate::par::{self, Execution};
use crate::rng::child_rng;

#[derive(Debug, Clone)]
pub struct GradSample {
    pub input: Tensor,
    pub side: Option<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Below this magnitude errors are judged absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub block: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub max_rel_error: f64,
    /// Index of the worst parameter.
    pub worst_index: Option<usize>,
    pub blocks: Vec<BlockError>,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU sign.
    pub skipped_kinks: usize,
    pub passed: bool,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn loss(model: &ModelGraph, params: &[f64], samples: &[GradSample]) -> f64 {
    let n = samples.len() as f64;
    samples
        .iter()
        .map(|s| mse(&model.output_with(params, &s.input, s.side.as_deref()), &s.target).expect("checked shapes"))
        .sum::<f64>()
        / n
}

/// Backprop gradient of the mean MSE over `samples` (dropout off).
pub fn analytic_gradient(model: &mut ModelGraph, samples: &[GradSample]) -> Result<Vec<f64>, NnError> {
    model.zero_grad();
    let n = samples.len() as f64;
    for s in samples {
        let y = model.forward(&s.input, s.side.as_deref(), false)?;
        let mut g = mse_grad(y.data(), &s.target)?;
        g.iter_mut().for_each(|v| *v /= n);
        model.backward(&g)?;
    }
    let g = model.grads().to_vec();
    model.zero_grad();
    Ok(g)
}

/// Central differences for parameters `indices`; second vector flags kinks.
pub fn numeric_gradient(model: &ModelGraph, samples: &[GradSample], h: f64, indices: &[usize]) -> (Vec<f64>, Vec<bool>) {
    let base: Vec<Vec<bool>> =
        samples.iter().map(|s| model.relu_signature(model.params(), &s.input, s.side.as_deref())).collect();
    let mut p = model.params().to_vec();
    let mut num = Vec::with_capacity(indices.len());
    let mut kink = Vec::with_capacity(indices.len());
    for &k in indices {
        let orig = p[k];
        p[k] = orig + h;
        let lp = loss(model, &p, samples);
        let sp = samples.iter().zip(&base).any(|(s, b)| &model.relu_signature(&p, &s.input, s.side.as_deref()) != b);
        p[k] = orig - h;
        let lm = loss(model, &p, samples);
        let sm = samples.iter().zip(&base).any(|(s, b)| &model.relu_signature(&p, &s.input, s.side.as_deref()) != b);
        p[k] = orig;
        num.push((lp - lm) / (2.0 * h));
        kink.push(sp || sm);
    }
    (num, kink)
}

/// Compares `analytic[indices[i]]` with `numeric[i]`.
pub fn compare_gradients(
    blocks: &[ParamBlock],
    indices: &[usize],
    analytic: &[f64],
    numeric: &[f64],
    kinks: &[bool],
    tol: f64,
) -> GradCheckReport {
    let mut per_block: Vec<f64> = vec![0.0; blocks.len()];
    let mut max = 0.0f64;
    let mut worst = None;
    let mut checked = 0;
    let mut skipped = 0;
    for (i, &k) in indices.iter().enumerate() {
        if kinks[i] {
            skipped += 1;
            continue;
        }
        checked += 1;
        let e = relative_error(analytic[k], numeric[i]);
        let e = if e.is_nan() { f64::INFINITY } else { e };
        if let Some(b) = blocks.iter().position(|b| (b.start..b.start + b.len).contains(&k)) {
            per_block[b] = per_block[b].max(e);
        }
        if e > max || worst.is_none() {
            max = max.max(e);
            worst = Some(k);
        }
    }
    GradCheckReport {
        tol,
        max_rel_error: max,
        worst_index: worst,
        blocks: blocks
            .iter()
            .zip(per_block)
            .map(|(b, e)| BlockError { block: b.name.clone(), max_rel_error: e })
            .collect(),
        checked,
        skipped_kinks: skipped,
        passed: max <= tol,
    }
}

fn validate(model: &ModelGraph, samples: &[GradSample]) -> Result<(), NnError> {
    if samples.is_empty() {
        return Err(NnError::Shape("gradient check needs at least one sample".into()));
    }
    let out: usize = model.output_shape().iter().product();
    for s in samples {
        if s.target.len() != out {
            return Err(NnError::Shape(format!("target has {} values, output has {out}", s.target.len())));
        }
    }
    Ok(())
}

/// Checks every parameter.
pub fn gradient_check(model: &mut ModelGraph, samples: &[GradSample], h: f64, tol: f64) -> Result<GradCheckReport, NnError> {
    gradient_check_sampled(model, samples, h, tol, 1)
}

/// Checks every `every`-th parameter; for large models.
pub fn gradient_check_sampled(
    model: &mut ModelGraph,
    samples: &[GradSample],
    h: f64,
    tol: f64,
    every: usize,
) -> Result<GradCheckReport, NnError> {
    validate(model, samples)?;
    let analytic = analytic_gradient(model, samples)?;
    let indices: Vec<usize> = (0..model.n_params()).step_by(every.max(1)).collect();
    let (num, kinks) = numeric_gradient(model, samples, h, &indices);
    Ok(compare_gradients(&model.param_blocks(), &indices, &analytic, &num, &kinks, tol))
}

/// One architecture of the standard suite.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: &'static str,
    pub input_shape: Vec<usize>,
    pub side_dim: usize,
    pub specs: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub seeds: usize,
    pub max_rel_error: f64,
    pub skipped_kinks: usize,
    pub passed: bool,
}

/// Every layer kind on its own plus the 4-layer compositions.
pub fn standard_cases() -> Vec<SuiteCase> {
    let conv = |filters, padding, activation| LayerSpec::Conv2D { filters, kernel: (3, 3), padding, activation };
    let case = |name, input_shape: Vec<usize>, side_dim, specs| SuiteCase { name, input_shape, side_dim, specs };
    vec![
        case("dense", vec![4], 0, vec![LayerSpec::dense(3, Activation::Tanh), LayerSpec::dense(2, Activation::Sigmoid)]),
        case("conv2d", vec![2, 4, 5], 0, vec![conv(2, Padding::Valid, Activation::Tanh), LayerSpec::Flatten]),
        case("lstm", vec![5, 3], 0, vec![LayerSpec::lstm(3, true), LayerSpec::Flatten]),
        case(
            "convlstm",
            vec![3, 1, 2, 3],
            0,
            vec![LayerSpec::ConvLstm { filters: 2, kernel: (3, 3), return_sequences: false }, LayerSpec::Flatten],
        ),
        case(
            "dropout",
            vec![5],
            0,
            vec![LayerSpec::dense(4, Activation::Tanh), LayerSpec::Dropout { p: 0.3 }, LayerSpec::dense(2, Activation::Linear)],
        ),
        case("flatten", vec![2, 3], 0, vec![LayerSpec::Flatten, LayerSpec::dense(2, Activation::Sigmoid)]),
        case(
            "concat_side",
            vec![3],
            2,
            vec![LayerSpec::dense(3, Activation::Tanh), LayerSpec::ConcatSide, LayerSpec::dense(2, Activation::Linear)],
        ),
        case(
            "cnn-lstm",
            vec![1, 3, 3],
            0,
            vec![
                conv(2, Padding::Same, Activation::Relu),
                conv(2, Padding::Same, Activation::Relu),
                LayerSpec::lstm(3, false),
                LayerSpec::dense(4, Activation::Linear),
            ],
        ),
        case(
            "conv-dropout-dense",
            vec![1, 3, 4],
            0,
            vec![
                conv(3, Padding::Same, Activation::Relu),
                LayerSpec::Dropout { p: 0.3 },
                LayerSpec::Flatten,
                LayerSpec::dense(2, Activation::Tanh),
            ],
        ),
        case(
            "stacked-lstm",
            vec![4, 2],
            0,
            vec![
                LayerSpec::lstm(3, true),
                LayerSpec::lstm(2, false),
                LayerSpec::dense(3, Activation::Relu),
                LayerSpec::dense(2, Activation::Linear),
            ],
        ),
    ]
}

/// Two uniform `[-1, 1)` samples drawn from `seed`.
pub fn random_samples(model: &ModelGraph, n: usize, seed: u64) -> Vec<GradSample> {
    let mut rng = child_rng(seed, &[0x6C]);
    let in_len: usize = model.input_shape().iter().product();
    let out_len: usize = model.output_shape().iter().product();
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    (0..n)
        .map(|_| GradSample {
            input: Tensor::new(model.input_shape().to_vec(), draw(in_len)).expect("shape from model"),
            side: (model.side_dim() > 0).then(|| draw(model.side_dim())),
            target: draw(out_len),
        })
        .collect()
}

/// Runs each case on seeds `0..seeds`; a case passes only if every seed does.
pub fn run_suite(cases: &[SuiteCase], seeds: u64, h: f64, tol: f64, exec: Execution) -> Result<Vec<SuiteResult>, NnError> {
    par::try_map(exec, cases, |c| {
        let mut worst = 0.0f64;
        let mut skipped = 0;
        let mut passed = true;
        for seed in 0..seeds {
            let mut m = ModelGraph::new(c.input_shape.clone(), c.side_dim, c.specs.clone(), seed)?;
            let s = random_samples(&m, 2, seed);
            let r = gradient_check(&mut m, &s, h, tol)?;
            worst = worst.max(r.max_rel_error);
            skipped += r.skipped_kinks;
            passed &= r.passed && r.checked > 0;
        }
        Ok(SuiteResult { name: c.name, seeds: seeds as usize, max_rel_error: worst, skipped_kinks: skipped, passed })
    })
}
