use ratedesign::scenario::{sample_population, ScenarioConfig};
use ratedesign::thermal::{PriceSignal, TimeGrid, simulate_trajectory};
use ratedesign::mpc::{solve_mpc, MpcOptions};

fn main() {
    let config = ScenarioConfig::default();
    let fine = TimeGrid::daily(15).unwrap();
    let pop = sample_population(&config, &fine, 3).unwrap();
    for (i, theta) in pop.iter().enumerate() {
        let free = simulate_trajectory(theta, &vec![0.0; 96], theta.t_d).unwrap();
        let fmax = free.iter().cloned().fold(f64::MIN, f64::max);
        let fmin = free.iter().cloned().fold(f64::MAX, f64::min);
        let sol = solve_mpc(theta, &PriceSignal::flat(10.0, 96), &MpcOptions::default()).unwrap();
        let usum: f64 = sol.u_star.iter().sum();
        let tmax = sol.t.iter().cloned().fold(f64::MIN, f64::max);
        println!("consumer {i}: k_r={} gamma={:.2} flex={} | free response in [{fmin:.2},{fmax:.2}] band [{},{}] | sum u* = {usum:.3}, Tmax={tmax:.2}, J={:.3}",
            theta.thermal.k_r, theta.gamma, theta.flexible, theta.t_lo, theta.t_hi, sol.j);
        let wmean: f64 = theta.w.iter().sum::<f64>()/96.0;
        let qmean: f64 = theta.q.iter().sum::<f64>()/96.0;
        println!("  w mean {wmean:.2}, q mean {qmean:.2}, T_inf(mean) = {:.2}", (theta.thermal.k_w*wmean + qmean)/(1.0-theta.thermal.k_r));
    }
}
