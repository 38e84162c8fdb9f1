use std::fs;
use std::path::{Path, PathBuf};

use autowave::obstacles::sealed_center;
use autowave::pathsolver::{overlay, solve_path_observed, StaticMap};
use autowave::pgm::{load_pgm, save_pgm, Encoding};
use autowave::wavesim::sweep_bias;
use autowave::{
    build_coupling, calibrate_slope, make_fixture, predict_solution_time, worst_case_time, Cell, FixtureKind, Outcome,
    PathProblem, ReactionCurve, TemplateImage,
};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_BUDGET, EXIT_NO_PATH};

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Output { path: dir.display().to_string(), source })?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

/// Fits the cubic slope to `wave.target_tp` and writes `curve.toml`.
pub fn calibrate(cfg: &RunConfig) -> Result<i32, CliError> {
    cfg.check_physical()?;
    let anchors = cfg.curve.anchors();
    // the threshold check only needs the anchor roots, which any slope shares
    cfg.validate(&ReactionCurve::cubic(cfg.curve.slope, anchors)?)?;
    let target = cfg.wave.target_tp;
    if !(target.is_finite() && target > 0.0) {
        return Err(CliError::Config(format!("wave.target_tp must be positive, got {target}")));
    }
    let cal = match calibrate_slope(target, &cfg.params(), anchors, cfg.wave.threshold) {
        Ok(cal) => cal,
        Err(err) => {
            if let autowave::Error::Calibration { trace, .. } = &err {
                eprintln!("slope search (slope uA/V^3 -> t_p ns):");
                for (slope, tp) in trace {
                    match tp {
                        Some(tp) => eprintln!("  {slope:>20.12} -> {tp:.4}"),
                        None => eprintln!("  {slope:>20.12} -> no front"),
                    }
                }
            }
            return Err(err.into());
        }
    };
    let dir = output_dir(cfg)?;
    let text = toml::to_string(&cal.curve).map_err(|e| CliError::Config(e.to_string()))?;
    let path = dir.join("curve.toml");
    write(&path, text)?;
    let slope = match &cal.curve {
        ReactionCurve::Cubic(c) => c.slope,
        ReactionCurve::Piecewise(_) => unreachable!("calibration fits a cubic"),
    };
    println!("slope     {slope} uA/V^3 ({} evaluations)", cal.trace.len());
    println!("t_p       {:.4} ns (target {target} ns)", cal.measurement.t_p);
    println!("c_p       {:.3} cells/us", cal.measurement.c_p);
    println!("curve     {}", path.display());
    Ok(0)
}

/// Measures t_p for every bias and writes `speed.csv`.
pub fn speed(cfg: &RunConfig, biases: &[f64]) -> Result<i32, CliError> {
    cfg.check_physical()?;
    let curve = cfg.curve()?;
    let report = sweep_bias(biases, &cfg.params(), &curve, cfg.wave.threshold);
    let dir = output_dir(cfg)?;
    let path = dir.join("speed.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write(&path, buf)?;
    println!(
        "{} biases, t_p {}monotone, written to {}",
        report.points.len(),
        if report.monotone { "" } else { "NOT " },
        path.display()
    );
    Ok(0)
}

fn template(cfg: &RunConfig) -> Result<(TemplateImage, Option<FixtureKind>), CliError> {
    if let Some(path) = &cfg.problem.template {
        return Ok((load_pgm(cfg.resolve(path))?, None));
    }
    let kind = cfg.problem.fixture.unwrap_or(FixtureKind::Room);
    Ok((make_fixture(kind, cfg.grid.rows, cfg.grid.cols, cfg.seed)?, Some(kind)))
}

fn endpoints(cfg: &RunConfig, img: &TemplateImage, kind: Option<FixtureKind>) -> Result<(Cell, Cell), CliError> {
    let to_cell = |[r, c]: [usize; 2]| Cell::new(r, c);
    let mut free = img.free_cells();
    let first = free.next();
    let last = free.last().or(first);
    let start = match cfg.problem.start {
        Some(rc) => to_cell(rc),
        None => first.ok_or_else(|| CliError::Config("template has no free cell for the start".into()))?,
    };
    let target = match (cfg.problem.target, kind) {
        (Some(rc), _) => to_cell(rc),
        (None, Some(FixtureKind::Sealed)) => sealed_center(img.rows(), img.cols()),
        (None, _) => last.ok_or_else(|| CliError::Config("template has no free cell for the target".into()))?,
    };
    Ok((start, target))
}

/// Removes frame files left by an earlier run.
fn clear_frames(dir: &Path) -> Result<(), CliError> {
    let io = |source| CliError::Output { path: dir.display().to_string(), source };
    fs::create_dir_all(dir).map_err(io)?;
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("iter") && name.ends_with(".pgm") {
            fs::remove_file(&path).map_err(io)?;
        }
    }
    Ok(())
}

/// Runs the path solver and writes `solution.json`, `overlay.pgm` and the
/// optional frames. The exit code reflects the outcome.
pub fn solve(cfg: &RunConfig) -> Result<i32, CliError> {
    let curve = cfg.curve()?;
    cfg.validate(&curve)?;
    let params = cfg.params();
    let (img, kind) = template(cfg)?;
    let (start, target) = endpoints(cfg, &img, kind)?;
    let map = build_coupling(&img, &params, cfg.coupling.mode())?;

    let mut problem = PathProblem::new(params, curve, start, target);
    problem.threshold = cfg.wave.threshold;
    problem.excitation = cfg.excitation.excitation();
    problem.timeout.t_p_est = cfg.problem.t_p;
    problem.max_iterations = cfg.problem.max_iterations;

    let dir = output_dir(cfg)?;
    let frames = dir.join("frames");
    let frame_every = cfg.output.frame_every;
    if frame_every.is_some() {
        clear_frames(&frames)?;
    }
    let mut written = 0usize;
    let solution = solve_path_observed(&problem, &mut StaticMap(map), frame_every, &mut |k, state| {
        let name = format!("iter{k:04}_t{:08}.pgm", state.time.round() as u64);
        written += 1;
        save_pgm(&state.snapshot(), frames.join(name), Encoding::Raw)
    })?;

    let json = dir.join("solution.json");
    write(&json, solution.to_json()?)?;
    if cfg.output.overlay {
        save_pgm(&overlay(&img, &solution), dir.join("overlay.pgm"), Encoding::Plain)?;
    }
    let echo = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    write(&dir.join("run.toml"), echo)?;

    let outcome = match solution.outcome {
        Outcome::Reached => "reached",
        Outcome::NoPath => "no path",
        Outcome::BudgetExceeded => "iteration budget exceeded",
    };
    println!("{outcome}: {start} -> {} in {} steps", solution.target, solution.steps());
    println!(
        "simulated {:.1} ns, series estimate {:.1} ns at t_p = {:.3} ns",
        solution.total_time,
        predict_solution_time(solution.steps(), solution.t_p),
        solution.t_p
    );
    if frame_every.is_some() {
        println!("{written} frames in {}", frames.display());
    }
    println!("solution  {}", json.display());
    Ok(match solution.outcome {
        Outcome::Reached => 0,
        Outcome::NoPath => EXIT_NO_PATH,
        Outcome::BudgetExceeded => EXIT_BUDGET,
    })
}

/// Prints the series estimate for `steps` and/or the worst case for a grid.
pub fn predict(steps: Option<u64>, size: Option<(usize, usize)>, t_p: f64) -> Result<i32, CliError> {
    if !(t_p.is_finite() && t_p > 0.0) {
        return Err(CliError::Config(format!("t_p must be positive, got {t_p}")));
    }
    if steps.is_none() && size.is_none() {
        return Err(CliError::Config("give --steps, --size or both".into()));
    }
    if let Some(p) = steps {
        let p = usize::try_from(p).map_err(|_| CliError::Config(format!("{p} steps is too many")))?;
        let t = predict_solution_time(p, t_p);
        println!("T_s     = {t:.3} ns = {:.2} us  (P = {p}, t_p = {t_p} ns)", t / 1e3);
    }
    if let Some((n, m)) = size {
        let t = worst_case_time(n, m, t_p);
        println!("T_s,max = {t:.3} ns = {:.2} ms  ({n}x{m} grid, t_p = {t_p} ns)", t / 1e6);
    }
    Ok(0)
}
