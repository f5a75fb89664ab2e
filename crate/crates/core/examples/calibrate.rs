use ratedesign::evaluate::{evaluate_rates, rebound_profile, EvalContext};
use ratedesign::milp::MilpParams;
use ratedesign::reformulate::{design_tariff, BigMPolicy, DesignSpec, ObjectiveMode, SearchOptions};
use ratedesign::scenario::{coarsen_consumer, sample_population, ScenarioConfig};
use ratedesign::thermal::{GlobalConstants, PriceKind, TimeGrid};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let config = ScenarioConfig::default();
    let fine = TimeGrid::daily(15).unwrap();
    let coarse = TimeGrid::daily(60).unwrap();
    let design_pop: Vec<_> = sample_population(&config, &fine, 8).unwrap()
        .iter().map(|t| coarsen_consumer(t, 4).unwrap()).collect();
    let eval_pop = {
        let mut c2 = config.clone();
        c2.seed = 1000;
        sample_population(&c2, &fine, 64).unwrap()
    };
    println!("[{:?}] populations sampled", t0.elapsed());

    let window_design = coarse.steps_in_clock_window(13*60, 16*60).unwrap();
    let window_eval = fine.steps_in_clock_window(13*60, 16*60).unwrap();
    let constants = GlobalConstants::default();

    let mk_spec = |mode: ObjectiveMode, structure: PriceKind, lambda: f64| DesignSpec {
        objective_mode: mode,
        structure,
        lambda,
        constants,
        peak_window: window_design,
        flat_price: 10.0,
        scenarios: design_pop.clone(),
        kappa: 3.0,
        big_m_policy: BigMPolicy::default(),
        grid: coarse,
    };

    let params = MilpParams::default();
    let search = SearchOptions::default();

    // --- PP peak design
    let t1 = Instant::now();
    let spec_pp = mk_spec(ObjectiveMode::Peak, PriceKind::Pp, 0.01);
    let out_pp = design_tariff(&spec_pp, &params, &search).unwrap();
    println!("[{:?}] PP design done: status {:?}, nodes {}, pivots {}, gap {:?}",
        t1.elapsed(), out_pp.result.milp.status, out_pp.result.milp.nodes,
        out_pp.result.milp.lp_pivots, out_pp.result.milp.gap);
    let c = &out_pp.result.price.c;
    println!("  PP price: off={:.2} on={:.2}", c[0], c[window_design.0]);

    // --- evaluate on fine grid
    let ctx = EvalContext { constants, window: window_eval, flat_price: 10.0, grid: fine };
    let flat_sig = ratedesign::thermal::PriceSignal::flat(10.0, 96);
    let rep_flat = evaluate_rates("flat", &flat_sig, &eval_pop, &ctx).unwrap();
    let pp_fine = out_pp.result.price.lift(4);
    let rep_pp = evaluate_rates("pp_peak", &pp_fine, &eval_pop, &ctx).unwrap();
    println!("  flat: peak inflex {:.3} flex {:.3} | var inflex {:.4} flex {:.4}",
        rep_flat.inflexible.peak_load, rep_flat.flexible.peak_load,
        rep_flat.inflexible.load_variance, rep_flat.flexible.load_variance);
    println!("  pp  : peak inflex {:.3} flex {:.3} | var inflex {:.4} flex {:.4}",
        rep_pp.inflexible.peak_load, rep_pp.flexible.peak_load,
        rep_pp.inflexible.load_variance, rep_pp.flexible.load_variance);
    let red_i = 1.0 - rep_pp.inflexible.peak_load / rep_flat.inflexible.peak_load;
    let red_f = 1.0 - rep_pp.flexible.peak_load / rep_flat.flexible.peak_load;
    println!("  peak reduction: inflex {:.1}% flex {:.1}%", 100.0*red_i, 100.0*red_f);
    let margins: Vec<f64> = rep_pp.inflexible.participation_margins.iter()
        .chain(rep_pp.flexible.participation_margins.iter()).cloned().collect();
    let ok = margins.iter().filter(|&&m| m >= 0.0).count();
    println!("  exact participation >= 0: {}/{}", ok, margins.len());
    let rb_flat = rebound_profile(&rep_flat, window_eval, &fine);
    let rb_pp = rebound_profile(&rep_pp, window_eval, &fine);
    println!("  rebound flat: pre {:?} in {:?} post {:?}", rb_flat.pre, rb_flat.inside, rb_flat.post);
    println!("  rebound pp  : pre {:?} in {:?} post {:?}", rb_pp.pre, rb_pp.inside, rb_pp.post);

    // --- RP variance design
    let t2 = Instant::now();
    let spec_rp = mk_spec(ObjectiveMode::Variance, PriceKind::Rp, 0.01);
    let out_rp = design_tariff(&spec_rp, &params, &search).unwrap();
    println!("[{:?}] RP design done: status {:?}, nodes {}, gap {:?}",
        t2.elapsed(), out_rp.result.milp.status, out_rp.result.milp.nodes, out_rp.result.milp.gap);
    let rp_fine = out_rp.result.price.lift(4);
    println!("  RP price: {:?}", out_rp.result.price.c.iter().map(|v| (v*10.0).round()/10.0).collect::<Vec<_>>());
    let rep_rp = evaluate_rates("rp_var", &rp_fine, &eval_pop, &ctx).unwrap();
    println!("  rp  : peak inflex {:.3} flex {:.3} | var inflex {:.4} flex {:.4}",
        rep_rp.inflexible.peak_load, rep_rp.flexible.peak_load,
        rep_rp.inflexible.load_variance, rep_rp.flexible.load_variance);
    let vred_i = 1.0 - rep_rp.inflexible.load_variance / rep_flat.inflexible.load_variance;
    let vred_f = 1.0 - rep_rp.flexible.load_variance / rep_flat.flexible.load_variance;
    println!("  variance reduction: inflex {:.1}% flex {:.1}%", 100.0*vred_i, 100.0*vred_f);
    println!("  rp peak vs flat: inflex {:.3} vs {:.3}, flex {:.3} vs {:.3}",
        rep_rp.inflexible.peak_load, rep_flat.inflexible.peak_load,
        rep_rp.flexible.peak_load, rep_flat.flexible.peak_load);
    println!("[total {:?}]", t0.elapsed());
}
