//! The five pipeline stages. Each writes its artifacts and a manifest into
//! the configured output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flatlayer::forward::add_noise;
use flatlayer::grid::Grid3D;
use flatlayer::inverse::XiEstimate;
use flatlayer::io::{
    kernel_cache_name, load_complex_field, load_real_field, read_kernel_cache, save_complex_field,
    save_real_field, write_kernel_cache, write_slice_csvs, write_spectrum_csv,
};
use flatlayer::metrics::{
    localization_report, slice_relative_error, timing_fit, write_localization_csv, write_timing_csv,
    AccuracyCurve, TimingFit, TimingRecord,
};
use flatlayer::physics::{build_green_kernel, contrast, GreenKernelTable};
use flatlayer::pipeline::{combine, FrequencyInversion, KernelPair, Scenario};
use flatlayer::{ComplexField, RealField};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{ForwardStats, RankStats, RunManifest};

/// File-name fragment for a frequency: `2.0 → omega_2`, `1.5 → omega_1p5`.
pub fn omega_tag(omega: f64) -> String {
    format!("omega_{omega}").replace('.', "p")
}

pub const XI_EXACT: &str = "xi_exact.laf";
pub const XI_COMBINED: &str = "xi.laf";

pub fn data_file(omega: f64) -> String {
    format!("w_{}.laf", omega_tag(omega))
}

pub fn xi_file(omega: f64) -> String {
    format!("xi_{}.laf", omega_tag(omega))
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(CliError::io(path))
}

fn scenario(cfg: &RunConfig) -> CliResult<Scenario> {
    Ok(Scenario::new(&cfg.grid, cfg.sources.clone())?)
}

fn kernel(
    cfg: &RunConfig,
    sc: &Scenario,
    receivers: &Grid3D,
    omega: f64,
    manifest: &mut RunManifest,
) -> CliResult<GreenKernelTable> {
    let x = &sc.scatterers;
    if !cfg.output.kernel_cache {
        return Ok(build_green_kernel(x, receivers, omega, &sc.transform)?);
    }
    let root = &cfg.output.dir;
    let dir = root.join("kernels");
    prepare_dir(&dir)?;
    let path = dir.join(kernel_cache_name(x, receivers, omega));
    if path.exists() {
        let mut r = std::io::BufReader::new(File::open(&path).map_err(CliError::io(&path))?);
        // a stale or foreign cache file is rebuilt rather than trusted
        if let Ok(table) = read_kernel_cache(&mut r, x, receivers, omega, &sc.transform) {
            manifest.add_input(root, &path)?;
            return Ok(table);
        }
    }
    let table = build_green_kernel(x, receivers, omega, &sc.transform)?;
    let mut w = create(&path)?;
    write_kernel_cache(&mut w, &table)?;
    finish(w, &path)?;
    manifest.add_file(root, &path)?;
    Ok(table)
}

fn kernels(cfg: &RunConfig, sc: &Scenario, omega: f64, manifest: &mut RunManifest) -> CliResult<KernelPair> {
    if !(omega > 0.0) {
        return Err(CliError::Config(format!("frequency must be positive, got {omega}")));
    }
    Ok(KernelPair {
        xx: kernel(cfg, sc, &sc.scatterers.clone(), omega, manifest)?,
        xy: kernel(cfg, sc, &sc.receivers.clone(), omega, manifest)?,
    })
}

fn save_xi(cfg: &RunConfig, name: &str, xi: &RealField, slices: Option<&str>, m: &mut RunManifest) -> CliResult<()> {
    let root = &cfg.output.dir;
    let path = root.join(name);
    save_real_field(&path, xi).map_err(|e| with_path(e, &path))?;
    m.add_file(root, &path)?;
    if let (true, Some(prefix)) = (cfg.output.slice_csv, slices) {
        for p in write_slice_csvs(root, prefix, &xi.to_complex()).map_err(|e| with_path(e, root))? {
            m.add_file(root, &p)?;
        }
    }
    Ok(())
}

fn with_path(e: flatlayer::Error, path: &Path) -> CliError {
    match e {
        flatlayer::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    }
}

/// Writes the exact `ξ` of the configured phantom.
pub fn run_phantom(cfg: &RunConfig) -> CliResult<RunManifest> {
    let t = Instant::now();
    prepare_dir(&cfg.output.dir)?;
    let mut m = RunManifest::new("phantom", cfg);
    let sc = scenario(cfg)?;
    let xi = sc.exact_xi(&cfg.phantom);
    save_xi(cfg, XI_EXACT, &xi, Some("xi_exact"), &mut m)?;
    m.summary.insert("max_xi".into(), cfg.phantom.max_xi());
    m.summary.insert("contrast".into(), contrast(&cfg.phantom, 1.0)?);
    m.stage_seconds.insert("total".into(), t.elapsed().as_secs_f64());
    m.save(&cfg.output.dir)?;
    Ok(m)
}

/// Forward-solves every configured frequency and writes the (noisy) data.
pub fn run_synthesize(cfg: &RunConfig) -> CliResult<RunManifest> {
    let start = Instant::now();
    let root = cfg.output.dir.clone();
    prepare_dir(&root)?;
    let mut m = RunManifest::new("synthesize", cfg);
    let sc = scenario(cfg)?;
    for (i, &omega) in cfg.frequencies.iter().enumerate() {
        let tag = omega_tag(omega);
        let t = Instant::now();
        let k = kernels(cfg, &sc, omega, &mut m)?;
        m.stage_seconds.insert(format!("kernels_{tag}"), t.elapsed().as_secs_f64());
        let t = Instant::now();
        let f = sc
            .synthesize(&cfg.phantom, &k, cfg.forward.options())
            .map_err(|e| CliError::Numerical(format!("at omega = {omega}: {e}")))?;
        m.stage_seconds.insert(format!("forward_{tag}"), t.elapsed().as_secs_f64());
        let last = f.residual_history.last().copied().unwrap_or(0.0);
        m.forward.push(ForwardStats {
            omega,
            iterations: f.iterations,
            converged: f.converged,
            final_update: last,
        });
        if !f.converged {
            return Err(CliError::Numerical(format!(
                "Born iteration at omega = {omega} stopped after {} iterations (last relative update {last:.3e})",
                f.iterations
            )));
        }
        let seed = cfg.noise.seed.wrapping_add(i as u64);
        let w = add_noise(&f.w_field, cfg.noise.delta, seed)?;
        let path = root.join(data_file(omega));
        save_complex_field(&path, &w).map_err(|e| with_path(e, &path))?;
        m.add_file(&root, &path)?;

        let path = root.join(format!("residuals_{tag}.csv"));
        let mut out = create(&path)?;
        let io = CliError::io(&path);
        (|| {
            writeln!(out, "iteration,relative_update")?;
            for (n, r) in f.residual_history.iter().enumerate() {
                writeln!(out, "{},{r:.17e}", n + 1)?;
            }
            Ok(())
        })()
        .map_err(io)?;
        finish(out, &path)?;
        m.add_file(&root, &path)?;
    }
    m.stage_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    m.save(&root)?;
    Ok(m)
}

/// Loads the synthesize manifest from `data_dir` and checks it against `cfg`.
fn load_data(cfg: &RunConfig, data_dir: &Path, m: &mut RunManifest) -> CliResult<(RunManifest, Vec<ComplexField>)> {
    let mpath = data_dir.join(RunManifest::file_name("synthesize"));
    let data = RunManifest::load(&mpath)?;
    if data.config.grid != cfg.grid {
        return Err(CliError::Config(format!(
            "data in {} were synthesized on a different grid (N = {}, M = {}, M1 = {}) than configured (N = {}, M = {}, M1 = {})",
            data_dir.display(),
            data.config.grid.n,
            data.config.grid.scatterer.count,
            data.config.grid.receiver.count,
            cfg.grid.n,
            cfg.grid.scatterer.count,
            cfg.grid.receiver.count
        )));
    }
    if data.config.sources != cfg.sources {
        return Err(CliError::Config("data were synthesized with different sources".into()));
    }
    data.verify(data_dir)?;
    m.add_input(data_dir, &mpath)?;
    let sc_receivers = flatlayer::make_grids(&cfg.grid)?.1;
    let mut fields = Vec::with_capacity(cfg.frequencies.len());
    for &omega in &cfg.frequencies {
        if !data.config.frequencies.contains(&omega) {
            return Err(CliError::Config(format!("no data for omega = {omega} in {}", data_dir.display())));
        }
        let path = data_dir.join(data_file(omega));
        let w = load_complex_field(&path).map_err(|e| with_path(e, &path))?;
        if w.grid() != &sc_receivers {
            return Err(CliError::Config(format!("{} does not lie on the configured receiver grid", path.display())));
        }
        m.add_input(data_dir, &path)?;
        fields.push(w);
    }
    Ok((data, fields))
}

fn write_diagnostics(
    root: &Path,
    inversions: &[FrequencyInversion],
    per_freq: &[XiEstimate],
    combined: &XiEstimate,
    m: &mut RunManifest,
) -> CliResult<()> {
    let path = root.join("diagnostics.csv");
    let mut out = create(&path)?;
    let io = CliError::io(&path);
    (|| {
        writeln!(out, "label,imag_norm,masked_fraction,sigma_ref,unsatisfied_modes,failed_modes")?;
        for (inv, est) in inversions.iter().zip(per_freq) {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{},{}",
                omega_tag(inv.omega),
                est.imag_norm,
                est.masked_fraction,
                inv.stats.sigma_ref,
                inv.stats.unsatisfied,
                inv.stats.failed
            )?;
        }
        writeln!(out, "combined,{:.17e},{:.17e},,,", combined.imag_norm, combined.masked_fraction)
    })()
    .map_err(io)?;
    finish(out, &path)?;
    m.add_file(root, &path)?;

    let path = root.join("rank_histogram.csv");
    let mut out = create(&path)?;
    let io = CliError::io(&path);
    (|| {
        writeln!(out, "omega,rank,modes")?;
        for inv in inversions {
            for (r, count) in inv.stats.rank_histogram().iter().enumerate() {
                writeln!(out, "{},{r},{count}", inv.omega)?;
            }
        }
        Ok(())
    })()
    .map_err(io)?;
    finish(out, &path)?;
    m.add_file(root, &path)
}

/// Inverts the data found in `data_dir` (the output directory when `None`).
///
/// Writes one `ξ` per frequency and the least-squares combination over all
/// of them, which for a single frequency equals the per-frequency result.
pub fn run_invert(cfg: &RunConfig, data_dir: Option<&Path>) -> CliResult<RunManifest> {
    let start = Instant::now();
    let root = cfg.output.dir.clone();
    let data_dir: PathBuf = data_dir.map(Path::to_path_buf).unwrap_or_else(|| root.clone());
    let mut m = RunManifest::new("invert", cfg);
    let (data, fields) = load_data(cfg, &data_dir, &mut m)?;
    prepare_dir(&root)?;
    let delta = data.config.noise.delta;
    let reg = cfg.regularizer.resolve(delta)?;
    m.summary.insert("data_delta".into(), delta);
    let sc = scenario(cfg)?;

    let mut inversions = Vec::with_capacity(fields.len());
    for (&omega, w) in cfg.frequencies.iter().zip(&fields) {
        let tag = omega_tag(omega);
        let t = Instant::now();
        let k = kernels(cfg, &sc, omega, &mut m)?;
        m.stage_seconds.insert(format!("kernels_{tag}"), t.elapsed().as_secs_f64());
        if cfg.output.spectrum_csv {
            let path = root.join(format!("spectrum_{tag}.csv"));
            let mut out = create(&path)?;
            write_spectrum_csv(&mut out, &k.xy, &sc.scatterers.trapezoid_weights()).map_err(|e| with_path(e, &path))?;
            finish(out, &path)?;
            m.add_file(&root, &path)?;
        }
        let t = Instant::now();
        let inv = sc.invert_frequency(w, &k, &reg)?;
        m.stage_seconds.insert(format!("invert_{tag}"), t.elapsed().as_secs_f64());
        m.ranks.push(RankStats {
            omega,
            sigma_ref: inv.stats.sigma_ref,
            rank_histogram: inv.stats.rank_histogram(),
            unsatisfied_modes: inv.stats.unsatisfied,
            failed_modes: inv.stats.failed,
        });
        inversions.push(inv);
    }

    let eps = cfg.inversion.eps_div;
    let mut per_freq = Vec::with_capacity(inversions.len());
    for inv in &inversions {
        let est = combine(std::slice::from_ref(inv), eps)?;
        save_xi(cfg, &xi_file(inv.omega), &est.xi, None, &mut m)?;
        per_freq.push(est);
    }
    let combined = combine(&inversions, eps)?;
    save_xi(cfg, XI_COMBINED, &combined.xi, Some("xi"), &mut m)?;
    m.summary.insert("imag_norm".into(), combined.imag_norm);
    m.summary.insert("masked_fraction".into(), combined.masked_fraction);
    write_diagnostics(&root, &inversions, &per_freq, &combined, &mut m)?;
    m.stage_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    m.save(&root)?;
    Ok(m)
}

fn write_curve(root: &Path, name: &str, curve: &AccuracyCurve, m: &mut RunManifest) -> CliResult<()> {
    let path = root.join(name);
    let mut out = create(&path)?;
    curve.write_csv(&mut out).map_err(|e| with_path(e, &path))?;
    finish(out, &path)?;
    m.add_file(root, &path)
}

/// Accuracy curves and localization of the `ξ` artifacts in the output directory.
pub fn run_evaluate(cfg: &RunConfig) -> CliResult<RunManifest> {
    let start = Instant::now();
    let root = cfg.output.dir.clone();
    let mut m = RunManifest::new("evaluate", cfg);
    let sc = scenario(cfg)?;
    let exact = sc.exact_xi(&cfg.phantom);

    let load = |name: &str, m: &mut RunManifest| -> CliResult<RealField> {
        let path = root.join(name);
        let xi = load_real_field(&path).map_err(|e| with_path(e, &path))?;
        if xi.grid() != &sc.scatterers {
            return Err(CliError::Config(format!("{} does not lie on the configured scatterer grid", path.display())));
        }
        m.add_input(&root, &path)?;
        Ok(xi)
    };

    for &omega in &cfg.frequencies {
        let xi = load(&xi_file(omega), &mut m)?;
        let curve = slice_relative_error(&xi, &exact)?;
        if let Some(mean) = curve.mean() {
            m.summary.insert(format!("mean_delta_{}", omega_tag(omega)), mean);
        }
        write_curve(&root, &format!("accuracy_{}.csv", omega_tag(omega)), &curve, &mut m)?;
    }
    let xi = load(XI_COMBINED, &mut m)?;
    let curve = slice_relative_error(&xi, &exact)?;
    if curve.is_empty() {
        eprintln!("warning: the exact phantom vanishes on every slice; accuracy curve is empty");
    }
    if let Some(mean) = curve.mean() {
        m.summary.insert("mean_delta".into(), mean);
    }
    write_curve(&root, "accuracy.csv", &curve, &mut m)?;

    if !cfg.phantom.is_identically_zero() {
        let loc = localization_report(&xi, &cfg.phantom)?;
        let worst = loc.iter().map(|l| l.center_offset).fold(0.0, f64::max);
        m.summary.insert("max_center_offset".into(), worst);
        let path = root.join("localization.csv");
        let mut out = create(&path)?;
        write_localization_csv(&loc, &mut out).map_err(|e| with_path(e, &path))?;
        finish(out, &path)?;
        m.add_file(&root, &path)?;
    }
    m.stage_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    m.save(&root)?;
    Ok(m)
}

/// Times the full inversion (kernels, mode solves, extraction) for each `N`.
///
/// Data are synthesized untimed at the first configured frequency; each
/// timing is the minimum over `repeats` runs on a pool of `threads` workers.
pub fn run_bench(cfg: &RunConfig, n_list: Option<&[usize]>) -> CliResult<(Vec<TimingRecord>, TimingFit, RunManifest)> {
    let start = Instant::now();
    let root = cfg.output.dir.clone();
    let n_list = n_list.unwrap_or(&cfg.bench.n_list);
    if n_list.is_empty() {
        return Err(CliError::Config("bench needs at least one N".into()));
    }
    if let Some(n) = n_list.iter().find(|n| !n.is_power_of_two() || **n < 2) {
        return Err(CliError::Config(format!("bench sizes must be powers of two, got {n}")));
    }
    if cfg.bench.repeats == 0 || cfg.bench.threads == 0 {
        return Err(CliError::Config("bench repeats and threads must be positive".into()));
    }
    prepare_dir(&root)?;
    let mut m = RunManifest::new("bench", cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.bench.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    let omega = cfg.frequencies[0];
    let reg = cfg.regularizer.resolve(cfg.noise.delta)?;
    let mut records = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut grid = cfg.grid.clone();
        grid.n = n;
        let sc = Scenario::new(&grid, cfg.sources.clone())?;
        let k = sc.kernels(omega)?;
        let f = sc.synthesize(&cfg.phantom, &k, cfg.forward.options())?;
        let w = add_noise(&f.w_field, cfg.noise.delta, cfg.noise.seed)?;
        drop(k);
        let mut best = f64::INFINITY;
        for _ in 0..cfg.bench.repeats {
            let t = pool.install(|| -> CliResult<f64> {
                let t = Instant::now();
                let k = sc.kernels(omega)?;
                let inv = sc.invert_frequency(&w, &k, &reg)?;
                combine(&[inv], cfg.inversion.eps_div)?;
                Ok(t.elapsed().as_secs_f64())
            })?;
            best = best.min(t);
        }
        records.push(TimingRecord {
            n,
            m: grid.scatterer.count,
            m1: grid.receiver.count,
            seconds: best,
        });
    }
    let fit = if records.len() >= 2 {
        Some(timing_fit(&records)?)
    } else {
        None
    };
    let path = root.join("timing.csv");
    let mut out = create(&path)?;
    write_timing_csv(&records, fit, &mut out).map_err(|e| with_path(e, &path))?;
    finish(out, &path)?;
    m.add_file(&root, &path)?;
    if let Some(fit) = fit {
        m.summary.insert("exponent".into(), fit.exponent);
        m.summary.insert("t0".into(), fit.t0);
    }
    m.stage_seconds.insert("total".into(), start.elapsed().as_secs_f64());
    m.save(&root)?;
    let fit = fit.unwrap_or(TimingFit {
        exponent: f64::NAN,
        t0: records[0].seconds / (records[0].n * records[0].n) as f64,
    });
    Ok((records, fit, m))
}
