use nalgebra::DVector;
use safempc::{euler_step, GradientPlanner, Method, MppiPlanner, Scenario};

fn main() {
    let mut sc = Scenario::default_quadrotor();
    if let Some(w) = std::env::args().nth(4).and_then(|s| s.parse().ok()) {
        sc.effort_weight = w;
    }
    if let Some(p) = std::env::args().nth(5).and_then(|s| s.parse().ok()) {
        sc.sampler.position_fraction = p;
    }
    if let Some(s) = std::env::args().nth(6).and_then(|s| s.parse().ok()) {
        sc.sampler.attitude_spread = s;
    }
    if let Some(t) = std::env::args().nth(7).and_then(|s| s.parse().ok()) {
        sc.mppi.noise_std[1] = t;
    }
    if let Some(a) = std::env::args().nth(8).and_then(|s| s.parse().ok()) {
        sc.cbf.alpha = a;
    }

    // Pass 1: per-seed min_l for gmpc / gmpc-cbf / mppi-cbf.
    for method in [Method::Gmpc, Method::GmpcCbf, Method::MppiCbf] {
        print!("{:9}", method.name());
        for seed in 0..20 {
            let ep = safempc::run_episode(&sc, method, seed).unwrap();
            let tag = if ep.safe { ' ' } else { '*' };
            print!(" {seed}:{:+.2}{tag}", ep.min_constraint);
        }
        println!();
    }

    // Pass 2: step trace of one failing gmpc episode.
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0u64);
    let use_filter = std::env::args().nth(2).as_deref() == Some("filter");
    let use_mppi = std::env::args().nth(3).as_deref() == Some("mppi");
    println!("\n== trace seed {seed} filter={use_filter} mppi={use_mppi} ==");
    let x0 = sc.sample_initial_state(seed).unwrap();
    let model = sc.system.build_model().unwrap();
    let filter = sc.safety_filter().unwrap();
    let mut gp = GradientPlanner::new(sc.task().unwrap(), sc.lbfgs).unwrap();
    let mut mp = MppiPlanner::new(sc.task().unwrap(), sc.mppi_params(seed)).unwrap();
    let mut x: DVector<f64> = x0;
    for k in 0..sc.steps() {
        let (u_plan, diag) = if use_mppi {
            let o = mp.plan(&x).unwrap();
            (o.control, String::new())
        } else {
            let o = gp.plan(&x).unwrap();
            (
                o.control,
                format!(
                    "obj {:9.3} it {:2} lsfail {} revert {}",
                    o.diagnostics.objective,
                    o.diagnostics.iterations,
                    o.diagnostics.line_search_failed as u8,
                    o.diagnostics.reverted_to_warm_start as u8
                ),
            )
        };
        let (u, fdelta, infeas) = if use_filter {
            let out = filter.apply(&x, &u_plan);
            let d = (&out.u - &u_plan).norm();
            (out.u, d, out.infeasible)
        } else {
            (u_plan.clone(), 0.0, false)
        };
        let l = sc.system.constraint(&x);
        println!(
            "k {k:2} x {:+.3} z {:+.3} th {:+.3} vx {:+.3} vz {:+.3} om {:+.3} | l {:+.3} | up [{:+7.2} {:+6.2}] u [{:+7.2} {:+6.2}] d {:5.2} inf {} | {}",
            x[0], x[1], x[2], x[3], x[4], x[5], l, u_plan[0], u_plan[1], u[0], u[1], fdelta, infeas as u8, diag
        );
        x = euler_step(&model, &x, &u, sc.dt);
        if !x.iter().all(|v| v.is_finite()) || sc.system.constraint(&x) < -2.0 {
            println!("... aborted (far outside)");
            break;
        }
    }
}
