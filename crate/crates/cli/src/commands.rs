use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use treepde::estimator::estimate_point;
use treepde::fdm::io::{fmt17, write_binary, write_csv};
use treepde::fdm::{solve, Field};
use treepde::pade::sum_series_with_order;
use treepde::pdd::{run_pdd, PddConfig, PddRun};
use treepde::problem::{Coefficient, InitialData, Problem};
use treepde::rng::RngStream;
use treepde::sde::PathSimulator;
use treepde::trees::{mean_branches, tree_probability, RandomTree, Strategy, TreeSampler};

use crate::config::{parse_pade, RunConfig};
use crate::output::Outputs;
use crate::{CliError, PadeArgs, TreeArgs};

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

fn write_field(outputs: &mut Outputs, field: &Field, path: &Path) -> Result<(), CliError> {
    let w = outputs.create(path)?;
    if path.extension().is_some_and(|e| e == "bin") {
        write_binary(field, w)?;
    } else {
        write_csv(field, w)?;
    }
    Ok(())
}

pub fn solve_point(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let mut outputs = Outputs::new();
    let ys: &[f64] = if p.dim == 2 { std::slice::from_ref(&cfg.y) } else { &[] };
    let mut columns = String::from("x,");
    if p.dim == 2 {
        columns.push_str("y,");
    }
    columns.push_str("t,strategy,N,Ne_max,value,stderr,pade_pole_flag");
    let mut csv = match out {
        Some(path) => Some(outputs.csv(path, &cfg.hash(), &columns)?),
        None => None,
    };
    let pool = pool(cfg.workers)?;
    let mut task = 0u64;
    for &x in &cfg.x {
        for &t in &cfg.t {
            let mut est = cfg.estimator();
            est.task_id = task;
            task += 1;
            let point = [x, cfg.y];
            let start = Instant::now();
            let e = pool.install(|| estimate_point(&p, point, t, &est))?;
            let (l, m) = e.pade.order;
            let coords = ys.iter().fold(fmt17(x), |s, y| format!("{s},{}", fmt17(*y)));
            println!(
                "x={coords} t={t} value={} stderr={:.3e} pade=[{l}/{m}] pole={} spread={} pruned={} aborted={} ({:.2}s)",
                fmt17(e.value),
                e.stderr,
                e.pole_flag,
                e.pade.spread.map_or("-".into(), |s| format!("{s:.3e}")),
                e.series.pruned,
                e.series.aborted,
                start.elapsed().as_secs_f64()
            );
            if let Some(w) = csv.as_mut() {
                writeln!(
                    w,
                    "{coords},{},{},{},{},{},{},{}",
                    fmt17(t),
                    cfg.strategy,
                    cfg.n,
                    cfg.ne_max,
                    fmt17(e.value),
                    fmt17(e.stderr),
                    e.pole_flag
                )?;
            }
        }
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    outputs.commit();
    Ok(())
}

pub fn solve_reference(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let grid = cfg.grid(p.dim)?;
    let mut outputs = Outputs::new();
    let start = Instant::now();
    let field = solve(&p, &grid, &cfg.boundary())?;
    println!(
        "grid {}x{}, {} steps: min={} max={} ({:.2}s)",
        grid.nx,
        grid.ny,
        grid.n_steps,
        fmt17(field.min()),
        fmt17(field.max()),
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = out {
        write_field(&mut outputs, &field, path)?;
    }
    outputs.commit();
    Ok(())
}

fn run_pdd_cfg(cfg: &RunConfig, p: &Problem) -> Result<PddRun, CliError> {
    let grid = cfg.grid(p.dim)?;
    let pdd = PddConfig {
        n_sub: cfg.subdomains,
        nodal: cfg.nodal(),
        mc: cfg.mc_settings(),
        seed: cfg.seed,
        boundary: cfg.boundary(),
    };
    let run = run_pdd(p, &grid, &pdd)?;
    let t = &run.timings;
    println!(
        "{} subdomains, {} tasks (max attempts {}): T_MC={:.3}s T_INT={:.3}s T_LOCAL={:.3}s T_total={:.3}s",
        cfg.subdomains,
        run.plan.tasks.len(),
        run.interface.max_attempts(),
        t.mc,
        t.interp,
        t.local,
        t.total
    );
    Ok(run)
}

pub fn solve_pdd(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let mut outputs = Outputs::new();
    let dir = out.map(Path::to_path_buf);
    if let Some(dir) = &dir {
        outputs.dir(dir)?;
    }
    let run = run_pdd_cfg(cfg, &p)?;
    println!("min={} max={}", fmt17(run.field.min()), fmt17(run.field.max()));
    if let Some(dir) = dir {
        write_field(&mut outputs, &run.field, &dir.join("field.bin"))?;
        let hash = cfg.hash();
        let mut w = outputs.csv(&dir.join("timings.csv"), &hash, "phase,seconds")?;
        let t = &run.timings;
        for (phase, s) in [("mc", t.mc), ("interp", t.interp), ("local", t.local), ("total", t.total)] {
            writeln!(w, "{phase},{}", fmt17(s))?;
        }
        w.flush()?;
        let mut w = outputs.csv(&dir.join("interface.csv"), &hash, "interface,y,t,value,stderr")?;
        for (task, r) in run.plan.tasks.iter().zip(&run.interface.results) {
            writeln!(
                w,
                "{},{},{},{},{}",
                task.interface,
                fmt17(task.point[1]),
                fmt17(task.t),
                fmt17(r.value),
                fmt17(r.stderr)
            )?;
        }
        w.flush()?;
    }
    outputs.commit();
    Ok(())
}

pub fn compare(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let p = cfg.problem()?;
    let mut outputs = Outputs::new();
    let grid = cfg.grid(p.dim)?;
    let run = run_pdd_cfg(cfg, &p)?;
    let reference = solve(&p, &grid, &cfg.boundary())?;
    let mut worst = (0.0f64, [0.0; 2]);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let d = (run.field.at(i, j) - reference.at(i, j)).abs();
            if d > worst.0 {
                worst = (d, grid.point(i, j));
            }
        }
    }
    println!(
        "max |pdd - reference| = {} at ({}, {})",
        fmt17(worst.0),
        worst.1[0],
        worst.1[1]
    );
    if let Some(path) = out {
        let columns = if p.dim == 1 {
            "x,pdd,reference,abs_diff"
        } else {
            "x,y,pdd,reference,abs_diff"
        };
        let mut w = outputs.csv(path, &cfg.hash(), columns)?;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (a, b) = (run.field.at(i, j), reference.at(i, j));
                let x = fmt17(grid.x(i));
                let coords = if p.dim == 1 { x } else { format!("{x},{}", fmt17(grid.y(j))) };
                writeln!(w, "{coords},{},{},{}", fmt17(a), fmt17(b), fmt17((a - b).abs()))?;
            }
        }
        w.flush()?;
    }
    outputs.commit();
    Ok(())
}

pub fn tree_stats(a: &TreeArgs) -> Result<(), CliError> {
    if a.m < 2 {
        return Err(CliError::Config(format!("--m must be at least 2, got {}", a.m)));
    }
    if a.n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    let p = Problem::new(1, InitialData::Constant(1.0)).with_term(a.m, Coefficient::Constant(1.0));
    let strategy = Strategy::B { q: a.q };
    let sampler = TreeSampler::new(PathSimulator::new(&p, a.t)?, strategy)?;
    let analytic_mean = mean_branches(a.m as u64, a.q).ok();
    let mut counts = vec![0u64; a.max_ne as usize + 2];
    let mut aborted = 0u64;
    let mut leaf_sum = 0.0;
    let mut rng = RngStream::new(a.seed, 0);
    let mut tree = RandomTree::empty(strategy);
    for _ in 0..a.n {
        match sampler.sample_topology(a.t, &mut rng, &mut tree) {
            Ok(()) => {
                leaf_sum += tree.k as f64;
                let bin = tree.ne.min(a.max_ne as usize + 1);
                counts[bin] += 1;
            }
            Err(treepde::Error::TreeTooLarge { .. }) => aborted += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let n = a.n as f64;
    let kept = (a.n - aborted) as f64;
    println!(
        "m={} q={} N={}: mean k={:.6} (analytic {}), aborted {}",
        a.m,
        a.q,
        a.n,
        leaf_sum / kept.max(1.0),
        analytic_mean.map_or("infinite".into(), |m| format!("{m:.6}")),
        aborted
    );
    let mut outputs = Outputs::new();
    if let Some(path) = &a.out {
        let hash = {
            use sha2::{Digest, Sha256};
            let text = format!("tree-stats m={} q={} n={} t={} max_ne={} seed={}", a.m, a.q, a.n, a.t, a.max_ne, a.seed);
            Sha256::digest(text.as_bytes())[..8]
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect::<String>()
        };
        let mut w = outputs.csv(path, &hash, "Ne,k,analytic_P,empirical_P,stderr")?;
        for ne in 0..=a.max_ne {
            let pe = counts[ne as usize] as f64 / n;
            let k = 1 + ne * (a.m as u64 - 1);
            writeln!(
                w,
                "{ne},{k},{},{},{}",
                fmt17(tree_probability(ne, a.m as u64, a.q)?),
                fmt17(pe),
                fmt17((pe * (1.0 - pe) / n).sqrt())
            )?;
        }
        w.flush()?;
    }
    outputs.commit();
    Ok(())
}

fn read_coefficients(path: &PathBuf) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut c = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or("").trim();
        match last.parse::<f64>() {
            Ok(v) => c.push(v),
            // header row
            Err(_) if c.is_empty() => continue,
            Err(_) => return Err(CliError::Config(format!("bad coefficient '{last}' in {}", path.display()))),
        }
    }
    Ok(c)
}

pub fn pade_sum(a: &PadeArgs) -> Result<(), CliError> {
    let c = match (&a.input, &a.coeffs) {
        (Some(path), _) => read_coefficients(path)?,
        (None, Some(c)) => c.clone(),
        (None, None) => return Err(CliError::Config("give --input or --coeffs".into())),
    };
    if c.is_empty() {
        return Err(CliError::Config("no coefficients".into()));
    }
    let order = a.pade.as_deref().map(parse_pade).transpose()?;
    if let Some((l, m)) = order {
        if l + m + 1 > c.len() {
            return Err(CliError::Config(format!(
                "[{l}/{m}] needs {} coefficients, got {}",
                l + m + 1,
                c.len()
            )));
        }
    }
    let (value, d) = sum_series_with_order(&c, order)?;
    println!("value={}", fmt17(value));
    println!("order=[{}/{}]", d.order.0, d.order.1);
    println!(
        "poles_in_unit_interval={}",
        d.poles.iter().map(|z| format!("{z:.6}")).collect::<Vec<_>>().join(";")
    );
    println!("spread={}", d.spread.map_or("-".into(), fmt17));
    if !d.degenerate.is_empty() {
        println!(
            "degenerate={}",
            d.degenerate
                .iter()
                .map(|(l, m)| format!("[{l}/{m}]"))
                .collect::<Vec<_>>()
                .join(";")
        );
    }
    Ok(())
}
