use dpcc_core::runtime::{run_episode, EpisodeConfig};

fn assess(cfg: &EpisodeConfig) -> (f64, Option<f64>) {
    let log = run_episode(cfg).expect("episode");
    let switch = log.switch_step.unwrap() as usize;
    let reference = cfg.reference_after_switch.unwrap_or(cfg.reference);
    let post: Vec<f64> = log.records[switch..].iter().map(|r| r.y).collect();
    let rms = (post.iter().map(|y| (y - reference).powi(2)).sum::<f64>() / post.len() as f64).sqrt();
    let band = 0.02 * reference;
    let last_bad = post.iter().rposition(|y| (y - reference).abs() > band);
    let settle = match last_bad {
        None => Some(0.0),
        Some(i) if i + 1 < post.len() => Some((i + 1) as f64 * cfg.ts),
        Some(_) => None,
    };
    (rms, settle)
}

fn main() {
    for lambda in [1e-3, 3e-4, 1e-4, 3e-5] {
        let mut worst_settle: f64 = 0.0;
        let mut all_ok = true;
        let mut comp_wins = 0;
        for seed in 0..10u64 {
            let comp = EpisodeConfig { duration: 30.0, seed, lambda, ..EpisodeConfig::default() };
            let (rms_c, settle) = assess(&comp);
            match settle { Some(s) => worst_settle = worst_settle.max(s), None => all_ok = false }
            let nocomp = EpisodeConfig { compensate: false, ..comp.clone() };
            let (rms_n, _) = assess(&nocomp);
            if rms_c <= rms_n { comp_wins += 1; }
        }
        println!("lambda={lambda:8.0e}  all settle: {all_ok}  worst settle {worst_settle:.2}s  comp<=nocomp in {comp_wins}/10");
        // reference change 0.15 -> 0.25
        let mut ref_ok = true;
        for seed in 0..10u64 {
            let cfg = EpisodeConfig { duration: 30.0, seed, lambda, reference: 0.15,
                reference_after_switch: Some(0.25), ..EpisodeConfig::default() };
            let (_, settle) = assess(&cfg);
            if settle.is_none() { ref_ok = false; }
        }
        println!("          refchange settles in all 10: {ref_ok}");
    }
}
