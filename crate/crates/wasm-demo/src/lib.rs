//! Browser bindings for the benchmark system.
//!
//! Each operation takes and returns a JSON string. The `*_json` functions
//! hold the logic so they can be exercised natively; the exported wrappers
//! only convert errors into JS exceptions.

use serde::{Deserialize, Serialize};
use smp_control::benchmark;
use smp_control::expansion::{block_moment_matrices, lift_state, FeedbackGain};
use smp_control::model::WeightVector;
use smp_control::montecarlo::{self, ParametricGaussian, SimulationSpec, ThetaSchedule};
use smp_control::stability::{self, StabilityQuery};
use smp_control::synthesis::{self, SynthesisConfig};
use smp_control::tensor::{spectral_radius, Matrix};
use wasm_bindgen::prelude::*;

const MAX_PATHS: usize = 20_000;
const MAX_STEPS: usize = 200;

fn gain(k: [f64; 2]) -> Result<FeedbackGain, String> {
    FeedbackGain::new(Matrix::from_row_slice(1, 2, &k)).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub k: [f64; 2],
    #[serde(default)]
    pub open_loop: bool,
    /// `"constant"` (barycenter) or `"random"`.
    pub theta: String,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct SimulateResponse {
    pub mean_square: Vec<f64>,
    pub stderr: Vec<f64>,
    pub expanded: Vec<f64>,
    pub beta_hat: Option<f64>,
    pub expanded_beta_hat: Option<f64>,
}

pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: SimulateRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.paths == 0 || req.paths > MAX_PATHS || req.steps == 0 || req.steps > MAX_STEPS {
        return Err(format!("paths must be in 1..={MAX_PATHS} and steps in 1..={MAX_STEPS}"));
    }
    let dist = ParametricGaussian::UncertainMeanCov(benchmark::uncertain_mean_cov_benchmark());
    let s = benchmark::benchmark_vertex_set();
    let theta = match req.theta.as_str() {
        "constant" => ThetaSchedule::Constant {
            theta: vec![1.0 / 3.0; 3],
        },
        "random" => ThetaSchedule::random(3, req.steps, req.seed),
        other => return Err(format!("unknown θ mode `{other}`")),
    };
    let k = if req.open_loop {
        FeedbackGain::zeros(1, 2)
    } else {
        gain(req.k)?
    };
    let x0 = benchmark::benchmark_x0();
    let ens = montecarlo::simulate(
        &dist,
        &SimulationSpec {
            x0: x0.clone(),
            gain: Some(k.clone()),
            theta: theta.clone(),
            steps: req.steps,
            paths: req.paths,
            seed: req.seed,
        },
    )
    .map_err(|e| e.to_string())?;
    let e = block_moment_matrices(&s);
    let traj = e
        .propagate(&theta.weights(&s).map_err(|e| e.to_string())?, &k, &lift_state(&x0), req.steps)
        .map_err(|e| e.to_string())?;
    let (mean_square, stderr): (Vec<f64>, Vec<f64>) = (0..=req.steps).map(|t| ens.mean_square_norm(t)).unzip();
    let expanded: Vec<f64> = (0..=req.steps).map(|t| traj.mean_square_norm(t, 2)).collect();
    let resp = SimulateResponse {
        beta_hat: montecarlo::fit_decay(&mean_square, None).ok().map(|f| f.beta_hat),
        expanded_beta_hat: montecarlo::fit_decay(&expanded, None).ok().map(|f| f.beta_hat),
        mean_square,
        stderr,
        expanded,
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyRequest {
    pub k: [f64; 2],
    pub beta_tilde: f64,
}

#[derive(Debug, Serialize)]
pub struct CertifyResponse {
    pub certified: bool,
    pub margin: f64,
    pub verified_margin: f64,
    pub beta: f64,
    /// Spectral radius of the expanded closed loop at each corner of θ.
    pub corner_rates: Vec<f64>,
}

pub fn certify_json(request: &str) -> Result<String, String> {
    let req: CertifyRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let s = benchmark::benchmark_vertex_set();
    let e = block_moment_matrices(&s);
    let k = gain(req.k)?;
    let cert = stability::certify(&StabilityQuery::new(&e, &k, req.beta_tilde)).map_err(|e| e.to_string())?;
    let mut corner_rates = Vec::new();
    for c in 0..3 {
        let mut theta = vec![0.0; 3];
        theta[c] = 1.0;
        let w: WeightVector = s.weights_for(&theta).map_err(|e| e.to_string())?;
        let f = e.expanded_closed_loop(&w, &k).map_err(|e| e.to_string())?;
        corner_rates.push(spectral_radius(&f).map_err(|e| e.to_string())?);
    }
    let resp = CertifyResponse {
        certified: cert.is_certified(),
        margin: cert.solver_margin,
        verified_margin: cert.verified_margin,
        beta: cert.beta,
        corner_rates,
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeRequest {
    pub beta_tilde: f64,
    pub eta: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_max_iter() -> usize {
    20
}

#[derive(Debug, Serialize)]
pub struct SynthesizeResponse {
    pub status: String,
    pub k: Option<[f64; 2]>,
    pub quality: Option<f64>,
    pub epsilon: Vec<f64>,
    pub trace: Vec<f64>,
    pub message: Option<String>,
}

pub fn synthesize_json(request: &str) -> Result<String, String> {
    let req: SynthesizeRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let cfg = SynthesisConfig {
        beta_tilde: req.beta_tilde,
        eta: req.eta,
        max_iter: req.max_iter.clamp(1, 50),
        ..SynthesisConfig::default()
    };
    cfg.check().map_err(|e| e.to_string())?;
    let resp = match synthesis::synthesize(&benchmark::benchmark_vertex_set(), &cfg) {
        Ok(r) => {
            let km = r.gain.matrix();
            SynthesizeResponse {
                status: serde_json::to_value(r.status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                k: Some([km[(0, 0)], km[(0, 1)]]),
                quality: Some(r.quality),
                epsilon: r.trace.iter().map(|x| x.epsilon).collect(),
                trace: r.trace.iter().map(|x| x.trace).collect(),
                message: None,
            }
        }
        Err(e) => SynthesizeResponse {
            status: "failed".into(),
            k: None,
            quality: None,
            epsilon: Vec::new(),
            trace: Vec::new(),
            message: Some(e.to_string()),
        },
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsValue> {
    simulate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn certify(request: &str) -> Result<String, JsValue> {
    certify_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn synthesize(request: &str) -> Result<String, JsValue> {
    synthesize_json(request).map_err(|e| JsValue::from_str(&e))
}
