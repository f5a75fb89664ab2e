use ratedesign::evaluate::{evaluate_rates, EvalContext};
use ratedesign::scenario::{sample_population, ScenarioConfig};
use ratedesign::thermal::{GlobalConstants, PriceSignal, TimeGrid};

fn main() {
    let config = ScenarioConfig::default();
    let fine = TimeGrid::daily(15).unwrap();
    let pop = sample_population(&config, &fine, 3).unwrap();
    let ctx = EvalContext {
        constants: GlobalConstants::default(),
        window: fine.steps_in_clock_window(13 * 60, 16 * 60).unwrap(),
        flat_price: 10.0,
        grid: fine,
    };
    println!("window = {:?}", ctx.window);
    let rep = evaluate_rates("flat", &PriceSignal::flat(10.0, 96), &pop, &ctx).unwrap();
    println!("counts: inflex {} flex {}", rep.inflexible.count, rep.flexible.count);
    println!("peak: inflex {:.4} flex {:.4}", rep.inflexible.peak_load, rep.flexible.peak_load);
    let su: f64 = rep.inflexible.mean_u.iter().sum();
    println!("inflex mean_u sum over horizon = {su:.4}");
    println!("infeasible: {:?}", rep.infeasible_scenarios);
}
