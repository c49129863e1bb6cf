use std::time::Instant;

use nalgebra::DVector;
use needle_core::harness::{run_monte_carlo_sequential, Scenario};
use needle_core::synth::{closed_loop_with_stop, ActionStatus, Mode};

fn run_one(scenario: &Scenario, label: &str, x0: &DVector<f64>) {
    let model = scenario.build_model().unwrap();
    let spec = scenario.cost_spec().unwrap();
    let cfg = scenario.synth_config();
    let pred = scenario.success_predicate();
    let t = Instant::now();
    let run =
        closed_loop_with_stop(model.as_ref(), &spec, x0, scenario.success.deadline, &cfg, Some(&pred)).unwrap();
    let xf = run.final_state();
    let dist = (0..3).map(|i| xf[i] * xf[i]).sum::<f64>().sqrt();
    let speed = (xf[7] * xf[7] + xf[8] * xf[8] + xf[9] * xf[9]).sqrt();
    let applied = run.actions.iter().filter(|a| a.status == ActionStatus::Applied).count();
    let null = run.actions.iter().filter(|a| a.status == ActionStatus::Null).count();
    println!(
        "{label}: stop {:?}, dist {dist:7.2}, |v| {speed:6.2}, applied {applied}, null {null}, {} ms",
        run.stopped_at.map(|t| (t * 100.0).round() / 100.0),
        t.elapsed().as_millis()
    );
}

fn main() {
    let mut far = DVector::zeros(13);
    far[0] = 80.0;
    far[1] = -70.0;
    far[2] = 60.0;
    far[3] = 1.0;
    let mut mid = DVector::zeros(13);
    mid[0] = -50.0;
    mid[1] = 40.0;
    mid[2] = 45.0;
    mid[3] = 1.0;
    let mut near = DVector::zeros(13);
    near[0] = 20.0;
    near[1] = 16.0;
    near[2] = -18.0;
    near[3] = 1.0;
    let mut heave = DVector::zeros(13);
    heave[2] = -25.0;
    heave[3] = 1.0;
    let mut heave_blocked = DVector::zeros(13);
    heave_blocked[2] = 25.0;
    heave_blocked[3] = 1.0;

    for lam0 in [0.005, 0.01, 0.05] {
        println!("--- lambda0 = {lam0} ---");
        for (x0, tag) in [
            (&far, "far  "),
            (&mid, "mid  "),
            (&near, "near "),
            (&heave, "heave"),
            (&heave_blocked, "hblk "),
        ] {
            for mode in [Mode::SecondOrder, Mode::FirstOrder] {
                let mut s = Scenario::preset("fish3d-mc").unwrap().with_mode(mode);
                s.line_search.lambda0 = Some(lam0);
                run_one(&s, &format!("{tag} {mode:?}"), x0);
            }
        }
    }

    // Small Monte Carlo to estimate rates.
    println!("--- mini MC (12 trials) ---");
    for mode in [Mode::SecondOrder, Mode::FirstOrder] {
        let mut s = Scenario::preset("fish3d-mc").unwrap().with_mode(mode).with_trials(12);
        s.line_search.lambda0 = Some(0.01);
        let t = Instant::now();
        let rep = run_monte_carlo_sequential(&s).unwrap();
        println!(
            "{mode:?}: {}/{} success, mean {:?}, {} s",
            rep.successes,
            rep.trials,
            rep.mean_convergence_time.map(|v| (v * 10.0).round() / 10.0),
            t.elapsed().as_secs()
        );
    }
}
