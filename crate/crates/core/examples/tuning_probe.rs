use safempc::{run_batch, Method, Scenario};

fn main() {
    // Usage: tuning_probe [system=dubins|quadrotor] [effort=W] [lambda=L]
    //        [delta=D] [tnoise=S] [fnoise=S] [rmin=R] [rmax=R] [seeds=A..B]
    let mut args: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    for a in std::env::args().skip(1) {
        if let Some((k, v)) = a.split_once('=') {
            args.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| args.get(k).map(|v| v.parse::<f64>().unwrap());

    for (name, mut sc) in [
        ("dubins", Scenario::default_dubins()),
        ("quadrotor", Scenario::default_quadrotor()),
    ] {
        if let Some(filter) = args.get("system") {
            if name != filter {
                continue;
            }
        }
        if let Some(w) = get("effort") {
            sc.effort_weight = w;
        }
        if let Some(l) = get("lambda") {
            sc.penalty.weight = l;
        }
        if let Some(d) = get("delta") {
            sc.penalty.margin = d;
        }
        if let Some(s) = get("fnoise") {
            sc.mppi.noise_std[0] = s;
        }
        if let Some(s) = get("tnoise") {
            if sc.mppi.noise_std.len() > 1 {
                sc.mppi.noise_std[1] = s;
            }
        }
        if let Some(b) = get("beta") {
            sc.mppi.temperature = b;
        }
        if let Some(k) = get("ksamples") {
            sc.mppi.num_samples = k as usize;
        }
        if let Some(r) = get("rmin") {
            sc.sampler.radius_min = r;
        }
        if let Some(r) = get("rmax") {
            sc.sampler.radius_max = r;
        }
        if let Some(p) = get("pfrac") {
            sc.sampler.position_fraction = p;
        }
        if let Some(s) = get("spread") {
            sc.sampler.attitude_spread = s;
        }
        if let Some(a) = get("alpha") {
            sc.cbf.alpha = a;
        }
        if let Some(g) = get("gamma") {
            sc.cbf.gamma = g;
        }
        if let Some(range) = args.get("seeds") {
            let (a, b) = range.split_once("..").unwrap();
            sc.seeds = (a.parse().unwrap()..b.parse().unwrap()).collect();
        }
        println!(
            "== {name} (effort {} lambda {} delta {} noise {:?}) ==",
            sc.effort_weight, sc.penalty.weight, sc.penalty.margin, sc.mppi.noise_std
        );
        for m in Method::all() {
            let t0 = std::time::Instant::now();
            let b = run_batch(&sc, m).unwrap();
            let wall = t0.elapsed().as_secs_f64();
            let min_l = b
                .episodes
                .iter()
                .map(|e| e.min_constraint)
                .fold(f64::INFINITY, f64::min);
            let fails = b.episodes.iter().filter(|e| e.failure.is_some()).count();
            let unsafe_seeds: Vec<u64> = b
                .episodes
                .iter()
                .filter(|e| !e.safe)
                .map(|e| e.seed)
                .collect();
            println!(
                "{:9} safety {:5.1}%  cost {:?}  solve {:.5}s  filter {:.6}s  min_l {:+.4}  interv {}  fails {}  wall {:.1}s  unsafe {:?}",
                m.name(),
                b.safety_rate(),
                b.mean_cost_over_safe(),
                b.mean_solve_time(),
                b.mean_filter_time(),
                min_l,
                b.total_interventions(),
                fails,
                wall,
                unsafe_seeds
            );
        }
    }
}
