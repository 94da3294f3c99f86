//! Command bodies for the experiment runner.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::util::{
    fnv1a64, parse_bins, parse_values, to_json_text, trace_csv, write_text, Sidecar, TOOL_VERSION,
};
use super::{
    AnalyzeArgs, CliError, CliResult, CompareArgs, FitArgs, GridLoss, LossEvalArgs, MetricsArgs,
    SceneArgs, ScenePreset, SemidenseArgs, SparsifyArgs, SynthArgs, UnitArg,
};
use crate::ambiguity::{fusion_minimizer, gamma_threshold, minimizer, AmbiguityModel, LossKind};
use crate::depth::DepthMap;
use crate::fitter::{fit_kernel_regression, fit_stochastic_pixel, FitConfig};
use crate::losses::{ale, combined_loss, logit, rale, LossConfig};
use crate::metrics::{
    diff_histograms, error_diff, region_masks, standard_metrics_masked, MetricsReport, Region,
};
use crate::pgm;
use crate::scenegen::{
    accumulate_semidense_with, lidar_sample, make_scene, outlier_stats, LabelMap, LidarOptions,
    Pose, SceneSample, SceneSpec,
};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl SceneArgs {
    fn resolve_spec(&self) -> CliResult<SceneSpec> {
        match (&self.scene, self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read scene spec {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("invalid scene spec {}: {e}", path.display())))
            }
            (None, Some(preset)) => {
                let kind = match preset {
                    ScenePreset::Step1d => "step1d",
                    ScenePreset::Flat1d => "flat1d",
                    ScenePreset::Slope1d => "slope1d",
                    ScenePreset::Slab2d => "slab2d",
                    ScenePreset::Pole => "pole",
                    ScenePreset::Composite => "composite",
                };
                serde_json::from_value(json!({ "kind": kind }))
                    .map_err(|e| usage(format!("preset construction failed: {e}")))
            }
            (None, None) => Err(usage("either --scene or --preset is required")),
        }
    }

    fn build(&self) -> CliResult<(SceneSpec, SceneSample)> {
        let spec = self.resolve_spec()?;
        spec.validate().map_err(|e| usage(e.to_string()))?;
        let sample = make_scene(&spec, self.seed)?;
        Ok((spec, sample))
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(crate::Error::from)?;
    Ok(())
}

fn labels_to_pgm(path: &Path, labels: &LabelMap) -> CliResult<()> {
    pgm::write_labels(path, labels.width, labels.height, &labels.ids)?;
    Ok(())
}

pub(super) fn loss_eval(args: LossEvalArgs) -> CliResult<()> {
    if !(args.gamma.is_finite() && args.gamma >= 1.0) {
        return Err(usage(format!("gamma must be ≥ 1, got {}", args.gamma)));
    }
    match (&args.eps, &args.c1) {
        (Some(eps), None) => {
            let values = parse_values(eps)?;
            let mut out = String::from("epsilon,value,dvalue\n");
            for e in values {
                let eval = match args.loss {
                    GridLoss::Ale => ale(e, args.gamma),
                    GridLoss::Rale => rale(e, args.gamma),
                }
                .map_err(|e| usage(e.to_string()))?;
                let _ = writeln!(out, "{e},{},{}", eval.value, eval.dvalue);
            }
            write_text(args.out.as_deref(), &out)
        }
        (None, Some(c1_path)) => {
            let c1 = pgm::read_depth(c1_path)?;
            let c2 = pgm::read_depth(args.c2.as_ref().expect("clap requires c2"))?;
            let sigma = pgm::read_unit(args.sigma.as_ref().expect("clap requires sigma"))?;
            let target = pgm::read_depth(args.target.as_ref().expect("clap requires target"))?;
            let mut field = crate::fitter::TwinSurfaceField::filled(c1.width(), c1.height(), 0.0, 0.0, 0.0);
            for i in 0..field.len() {
                field.c1[i] = c1.data()[i];
                field.c2[i] = c2.data()[i];
                field.c3[i] = logit(sigma.data()[i]);
            }
            let cfg = LossConfig {
                gamma: args.gamma,
                fusion_weight: args.fusion_weight,
                ..LossConfig::default()
            };
            let (value, _) = combined_loss(&field, &target, &cfg)?;
            write_text(args.out.as_deref(), &format!("combined_loss\n{value}\n"))
        }
        (Some(_), Some(_)) => Err(usage("--eps and the PGM field mode are mutually exclusive")),
        (None, None) => Err(usage("either --eps or the PGM field inputs are required")),
    }
}

pub(super) fn analyze(args: AnalyzeArgs) -> CliResult<()> {
    if args.d1.is_nan() || args.d2.is_nan() || args.d1 >= args.d2 {
        return Err(usage("need d1 < d2"));
    }
    let p1s = parse_values(&args.p1)?;
    let gammas = parse_values(&args.gamma)?;
    if p1s.iter().any(|p| p.is_nan() || *p <= 0.0 || *p >= 1.0) {
        return Err(usage("p1 values must lie strictly inside (0, 1)"));
    }
    if gammas.iter().any(|g| g.is_nan() || *g < 1.0) {
        return Err(usage("gamma values must be ≥ 1"));
    }
    let mut out =
        String::from("p1,gamma,threshold,predicted,empirical_c1,empirical_c2,empirical_sigma,agree\n");
    for &p1 in &p1s {
        let threshold = gamma_threshold(p1, 1.0 - p1).map_err(|e| usage(e.to_string()))?;
        let model = AmbiguityModel::binary(args.d1, args.d2, p1).map_err(|e| usage(e.to_string()))?;
        for &gamma in &gammas {
            let predicted = minimizer(&model, LossKind::Ale, gamma)?;
            let predicted_text = if predicted.is_tie {
                "tie".to_string()
            } else {
                format!("{}", predicted.depth)
            };
            if args.empirical {
                let fit = FitConfig {
                    learning_rate: args.learning_rate,
                    iterations: args.iterations,
                    seed: args.seed,
                    gamma,
                    ..FitConfig::default()
                };
                let report = fit_stochastic_pixel(&model, &fit.loss_config(), &fit)?;
                let probe = report
                    .probe
                    .ok_or_else(|| CliError::NonConvergence("stochastic fit diverged".into()))?;
                let rale_thr = gamma_threshold(1.0 - p1, p1).map_err(|e| usage(e.to_string()))?;
                let pred_c2 = if gamma > rale_thr { args.d2 } else { args.d1 };
                let side = fusion_minimizer(p1);
                let tol = 0.15 * (args.d2 - args.d1);
                let agree = if predicted.is_tie {
                    "tie"
                } else {
                    let c1_ok = (probe.c1 - predicted.depth).abs() < tol;
                    let c2_ok = (probe.c2 - pred_c2).abs() < tol;
                    let sigma_ok = side.is_tie || ((probe.sigma > 0.5) == (side.sigma > 0.5));
                    if c1_ok && c2_ok && sigma_ok {
                        "yes"
                    } else {
                        "no"
                    }
                };
                let _ = writeln!(
                    out,
                    "{p1},{gamma},{threshold},{predicted_text},{},{},{},{agree}",
                    probe.c1, probe.c2, probe.sigma
                );
            } else {
                let _ = writeln!(out, "{p1},{gamma},{threshold},{predicted_text},,,,");
            }
        }
    }
    write_text(args.out.as_deref(), &out)
}

pub(super) fn synth(args: SynthArgs) -> CliResult<()> {
    let (spec, sample) = args.scene.build()?;
    ensure_dir(&args.out_dir)?;
    let config = json!({ "scene": spec, "seed": args.scene.seed });
    let stats = json!({
        "dense_valid": sample.dense_gt.valid_count(),
        "sparse_valid": sample.sparse.valid_count(),
        "width": sample.dense_gt.width(),
        "height": sample.dense_gt.height(),
    });
    let dense_path = args.out_dir.join("dense.pgm");
    pgm::write_depth(&dense_path, &sample.dense_gt)?;
    let sparse_path = args.out_dir.join("sparse.pgm");
    pgm::write_depth(&sparse_path, &sample.sparse)?;
    let labels_path = args.out_dir.join("labels.pgm");
    labels_to_pgm(&labels_path, &sample.labels)?;
    for path in [&dense_path, &sparse_path, &labels_path] {
        Sidecar {
            command: "synth",
            seed: args.scene.seed,
            config: config.clone(),
            extra: stats.clone(),
        }
        .write_for(path)?;
    }
    Ok(())
}

pub(super) fn sparsify(args: SparsifyArgs) -> CliResult<()> {
    let (spec, sample) = args.scene.build()?;
    ensure_dir(&args.out_dir)?;
    let sparse = lidar_sample(&sample.scene, args.rows, args.offset, args.azimuth_step)
        .map_err(|e| match e {
            crate::Error::InvalidRows(_) | crate::Error::Config(_) => usage(e.to_string()),
            other => other.into(),
        })?;
    let path = args.out_dir.join(format!("sparse_{}r.pgm", args.rows));
    pgm::write_depth(&path, &sparse)?;
    let kept = crate::scenegen::kept_rings(args.rows, args.offset).map_err(|e| usage(e.to_string()))?;
    Sidecar {
        command: "sparsify",
        seed: args.scene.seed,
        config: json!({
            "scene": spec,
            "seed": args.scene.seed,
            "rows": args.rows,
            "offset": args.offset,
            "azimuth_step": args.azimuth_step,
        }),
        extra: json!({
            "valid": sparse.valid_count(),
            "kept_rings": kept,
        }),
    }
    .write_for(&path)?;
    Ok(())
}

pub(super) fn semidense(args: SemidenseArgs) -> CliResult<()> {
    if args.sigma_t < 0.0 || args.sigma_r < 0.0 {
        return Err(usage("noise sigmas must be non-negative"));
    }
    let (spec, sample) = args.scene.build()?;
    ensure_dir(&args.out_dir)?;
    let motion = Pose {
        rotation: [0.0; 3],
        translation: [args.motion_tx, args.motion_ty, args.motion_tz],
    };
    let accumulated = accumulate_semidense_with(
        &sample.scene,
        args.frames,
        &motion,
        (args.sigma_r, args.sigma_t),
        args.scene.seed,
        args.rows,
        args.azimuth_step,
        &LidarOptions::default(),
    )
    .map_err(|e| match e {
        crate::Error::InvalidRows(_) | crate::Error::Config(_) => usage(e.to_string()),
        other => other.into(),
    })?;
    let stats = outlier_stats(&accumulated, &sample.dense_gt, &sample.scene.intrinsics)?;
    let path = args.out_dir.join("semidense.pgm");
    pgm::write_depth(&path, &accumulated)?;
    Sidecar {
        command: "semidense",
        seed: args.scene.seed,
        config: json!({
            "scene": spec,
            "seed": args.scene.seed,
            "frames": args.frames,
            "sigma_t": args.sigma_t,
            "sigma_r": args.sigma_r,
            "motion": motion,
            "rows": args.rows,
            "azimuth_step": args.azimuth_step,
        }),
        extra: json!({
            "outliers": stats,
            "valid": accumulated.valid_count(),
        }),
    }
    .write_for(&path)?;
    Ok(())
}

impl FitArgs {
    fn resolve_config(&self) -> CliResult<FitConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("invalid fit config {}: {e}", path.display())))?
            }
            None => FitConfig {
                // kernel-mode defaults; the shared struct defaults target the
                // stochastic trainer
                learning_rate: 0.5,
                iterations: 400,
                ..FitConfig::default()
            },
        };
        if let Some(b) = self.baseline {
            cfg.baseline = b;
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(it) = self.iterations {
            cfg.iterations = it;
        }
        if let Some(bw) = self.bandwidth {
            cfg.bandwidth = bw;
        }
        if let Some(hd) = self.huber_delta {
            cfg.huber_delta = hd;
        }
        if let Some(fw) = self.fusion_weight {
            cfg.fusion_weight = fw;
        }
        cfg.seed = self.scene.seed;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub(super) fn fit(args: FitArgs) -> CliResult<()> {
    let (spec, sample) = args.scene.build()?;
    let cfg = args.resolve_config()?;
    ensure_dir(&args.out_dir)?;
    let report = fit_kernel_regression(&sample, &cfg.loss_config(), &cfg)?;

    let config = json!({ "scene": spec, "seed": args.scene.seed, "fit": cfg });
    let sidecar = |extra: Value| Sidecar {
        command: "fit",
        seed: args.scene.seed,
        config: config.clone(),
        extra,
    };

    let fused = report.fused_depth();
    let mask_unsupported = |values: &[f64]| -> CliResult<DepthMap> {
        let mut map = DepthMap::from_data(report.field.width(), report.field.height(), values.to_vec())?;
        for (i, ok) in report.support.iter().enumerate() {
            if !ok {
                map.invalidate(i % report.field.width(), i / report.field.width());
            }
        }
        Ok(map)
    };

    let fused_path = args.out_dir.join("fused.pgm");
    pgm::write_depth(&fused_path, &fused)?;
    sidecar(json!({"content": "fused depth"})).write_for(&fused_path)?;

    let c1_path = args.out_dir.join("c1.pgm");
    pgm::write_depth(&c1_path, &mask_unsupported(&report.field.c1)?)?;
    sidecar(json!({"content": "foreground channel"})).write_for(&c1_path)?;

    let c2_path = args.out_dir.join("c2.pgm");
    pgm::write_depth(&c2_path, &mask_unsupported(&report.field.c2)?)?;
    sidecar(json!({"content": "background channel"})).write_for(&c2_path)?;

    let sigma_path = args.out_dir.join("sigma.pgm");
    pgm::write_unit(&sigma_path, &report.field.sigma_map())?;
    sidecar(json!({"content": "sigma, scaled by 65535"})).write_for(&sigma_path)?;

    let ambiguity_path = args.out_dir.join("ambiguity.pgm");
    let ambiguity_scale = 256.0;
    pgm::write_signed(&ambiguity_path, &report.field.ambiguity_map(), ambiguity_scale)?;
    sidecar(json!({"content": "ambiguity c2 - c1, signed", "scale": ambiguity_scale}))
        .write_for(&ambiguity_path)?;

    let trace_path = args.out_dir.join("trace.csv");
    write_text(Some(&trace_path), &trace_csv(&report.loss_trace))?;
    sidecar(json!({"content": "loss trace"})).write_for(&trace_path)?;

    let config_text = serde_json::to_string(&config).map_err(crate::Error::from)?;
    let report_json = json!({
        "tool": "twise",
        "version": TOOL_VERSION,
        "command": "fit",
        "seed": args.scene.seed,
        "config_hash": format!("fnv1a64:{:016x}", fnv1a64(config_text.as_bytes())),
        "config": config,
        "diverged": report.diverged,
        "iterations_run": report.loss_trace.len(),
        "final_loss": report.loss_trace.last(),
        "support_count": report.support.iter().filter(|s| **s).count(),
        "pixel_count": report.support.len(),
    });
    write_text(Some(&args.out_dir.join("report.json")), &to_json_text(&report_json)?)?;

    if report.diverged {
        return Err(CliError::NonConvergence(
            "fit diverged; see report.json".into(),
        ));
    }
    Ok(())
}

fn load_labels(path: &Path, gt: &DepthMap) -> CliResult<LabelMap> {
    let (w, h, ids) = pgm::read_labels(path)?;
    if w != gt.width() || h != gt.height() {
        return Err(CliError::Runtime(format!(
            "label map {}x{} does not match ground truth {}x{}",
            w,
            h,
            gt.width(),
            gt.height()
        )));
    }
    Ok(LabelMap { width: w, height: h, ids })
}

/// Whole/edge/inside reports for one prediction.
fn region_reports(
    pred: &DepthMap,
    gt: &DepthMap,
    labels: Option<&LabelMap>,
    trim: f64,
    edge_radius: usize,
    unit: UnitArg,
) -> CliResult<Vec<MetricsReport>> {
    let convert = |r: MetricsReport| match unit {
        UnitArg::Mm => r.to_millimeters(),
        UnitArg::M => r,
    };
    let mut reports = vec![convert(standard_metrics_masked(pred, gt, trim, None, Region::Whole)?)];
    if let Some(labels) = labels {
        let (edge, inside) = region_masks(labels, edge_radius);
        // a region with no valid ground truth is skipped rather than an error
        match standard_metrics_masked(pred, gt, trim, Some(&edge), Region::Edge) {
            Ok(r) => reports.push(convert(r)),
            Err(crate::Error::NoValidPixels) => {}
            Err(e) => return Err(e.into()),
        }
        match standard_metrics_masked(pred, gt, trim, Some(&inside), Region::Inside) {
            Ok(r) => reports.push(convert(r)),
            Err(crate::Error::NoValidPixels) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(reports)
}

fn reports_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(MetricsReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub(super) fn metrics(args: MetricsArgs) -> CliResult<()> {
    let pred = pgm::read_depth(&args.pred)?;
    let gt = pgm::read_depth(&args.gt)?;
    let labels = args
        .labels
        .as_deref()
        .map(|p| load_labels(p, &gt))
        .transpose()?;
    let reports = region_reports(
        &pred,
        &gt,
        labels.as_ref(),
        args.trim_threshold,
        args.edge_radius,
        args.unit,
    )?;
    write_text(args.out.as_deref(), &reports_csv(&reports))?;
    if let Some(json_path) = &args.json {
        write_text(Some(json_path), &to_json_text(&reports)?)?;
    }
    Ok(())
}

pub(super) fn compare(args: CompareArgs) -> CliResult<()> {
    let pred_a = pgm::read_depth(&args.pred_a)?;
    let pred_b = pgm::read_depth(&args.pred_b)?;
    let gt = pgm::read_depth(&args.gt)?;
    let labels = args
        .labels
        .as_deref()
        .map(|p| load_labels(p, &gt))
        .transpose()?;
    let bins_a = parse_bins(&args.bins_a)?;
    let bins_s = parse_bins(&args.bins_s)?;
    if args.scale.is_nan() || args.scale <= 0.0 {
        return Err(usage("scale must be positive"));
    }
    ensure_dir(&args.out_dir)?;

    let reports_a = region_reports(&pred_a, &gt, labels.as_ref(), args.trim_threshold, args.edge_radius, args.unit)?;
    let reports_b = region_reports(&pred_b, &gt, labels.as_ref(), args.trim_threshold, args.edge_radius, args.unit)?;
    let diff = error_diff(&pred_a, &pred_b, &gt)?;
    let hists = diff_histograms(&diff, &bins_a)?;
    let hists_s = diff_histograms(&diff, &bins_s)?;

    let config = json!({
        "pred_a": args.pred_a.file_name().and_then(|n| n.to_str()),
        "pred_b": args.pred_b.file_name().and_then(|n| n.to_str()),
        "trim_threshold": args.trim_threshold,
        "edge_radius": args.edge_radius,
        "bins_a": args.bins_a,
        "bins_s": args.bins_s,
        "scale": args.scale,
    });
    let sidecar = |extra: Value| Sidecar {
        command: "compare",
        seed: 0,
        config: config.clone(),
        extra,
    };

    let a_csv = args.out_dir.join("metrics_a.csv");
    write_text(Some(&a_csv), &reports_csv(&reports_a))?;
    sidecar(json!({"content": "metrics of pred_a"})).write_for(&a_csv)?;
    let b_csv = args.out_dir.join("metrics_b.csv");
    write_text(Some(&b_csv), &reports_csv(&reports_b))?;
    sidecar(json!({"content": "metrics of pred_b"})).write_for(&b_csv)?;

    let diff_a_path = args.out_dir.join("diff_a.pgm");
    pgm::write_signed(&diff_a_path, &diff.a, args.scale)?;
    sidecar(json!({"content": "absolute error difference A", "scale": args.scale}))
        .write_for(&diff_a_path)?;
    let diff_s_path = args.out_dir.join("diff_s.pgm");
    pgm::write_signed(&diff_s_path, &diff.s, args.scale)?;
    sidecar(json!({"content": "squared error difference S", "scale": args.scale}))
        .write_for(&diff_s_path)?;

    for (name, hist) in [
        ("hist_a_wins.csv", &hists.a_wins),
        ("hist_a_losses.csv", &hists.a_losses),
        ("hist_s_wins.csv", &hists_s.s_wins),
        ("hist_s_losses.csv", &hists_s.s_losses),
    ] {
        let path = args.out_dir.join(name);
        write_text(Some(&path), &hist.csv())?;
        sidecar(json!({"content": "histogram"})).write_for(&path)?;
    }

    let summary = json!({
        "tool": "twise",
        "version": TOOL_VERSION,
        "command": "compare",
        "config": config,
        "win_count": hists.win_count,
        "loss_count": hists.loss_count,
        "mean_win_a": hists.mean_win_a,
        "mean_loss_a": hists.mean_loss_a,
        "metrics_a": reports_a,
        "metrics_b": reports_b,
    });
    write_text(Some(&args.out_dir.join("summary.json")), &to_json_text(&summary)?)?;
    Ok(())
}
