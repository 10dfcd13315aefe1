use std::collections::BTreeMap;

use hoopstat::ingest::{parse_aggregates, parse_shot_events, top_n_shot_takers};
use hoopstat::predictive::{average_team_points, binomial_quantile, expected_points, membership_probs, PredictiveConfig};
use hoopstat::report::{correlate, quantile_sorted, rank_entities, summarize, RankBy};
use hoopstat::{ChainConfig, Dataset, EntityKey, EntityKind, ModelState, PosteriorDraws, Priors, Region, RegionCounts, RegionScheme};
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn counts_strategy(k: usize, max: u64) -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
    prop::collection::vec((0..=max, 0.0..=1.0f64), k).prop_map(|v| {
        let attempts: Vec<u64> = v.iter().map(|x| x.0).collect();
        let makes = v.iter().map(|&(a, f)| (a as f64 * f).floor() as u64).collect();
        (attempts, makes)
    })
}

fn dataset_strategy(max_rows: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::btree_map((0u8..12, 2018i32..2022), counts_strategy(Region::COUNT, 400), 1..max_rows).prop_map(|m| {
        let rows = m
            .into_iter()
            .map(|((id, season), (a, mk))| RegionCounts::new(EntityKey::new(format!("T{id}"), season), a, mk).unwrap())
            .collect();
        Dataset::new(EntityKind::Team, RegionScheme::nba(), rows).unwrap()
    })
}

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn state_strategy(l: usize, j: usize, i: usize) -> impl Strategy<Value = ModelState> {
    let k = Region::COUNT;
    (
        prop::collection::vec(simplex(k), l),
        prop::collection::vec(prop::collection::vec(0.01..0.99f64, k), j),
        simplex(l),
        simplex(j),
    )
        .prop_map(move |(p, q, pi, theta)| ModelState {
            p,
            q,
            w: vec![0; i],
            z: vec![0; i],
            pi,
            theta,
        })
}

fn posterior(data: &Dataset, draws: Vec<ModelState>) -> PosteriorDraws {
    let (l, j) = (draws[0].p.len(), draws[0].q.len());
    PosteriorDraws {
        config: ChainConfig::new(draws.len() + 1, 1, 1, 0),
        draws,
        priors: Priors::new(l, j, 5.0, 5.0, 5.0),
        dataset: data.clone(),
        dataset_fingerprint: data.fingerprint(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregate_csv_round_trips(data in dataset_strategy(8)) {
        let text = data.to_aggregate_csv();
        let back = parse_aggregates(text.as_slice(), EntityKind::Team).unwrap();
        prop_assert_eq!(back.fingerprint(), data.fingerprint());
        prop_assert_eq!(&back, &data);
        prop_assert_eq!(back.to_aggregate_csv(), text);
    }

    #[test]
    fn events_aggregate_to_consistent_counts(events in prop::collection::vec((0u8..4, 0usize..Region::COUNT, any::<bool>()), 1..200)) {
        let mut csv = String::from("entity_id,season,region,made\n");
        let mut expect: BTreeMap<(u8, usize), (u64, u64)> = BTreeMap::new();
        for &(id, k, made) in &events {
            csv.push_str(&format!("P{id},2021,{},{}\n", Region::ALL[k].code(), made as u8));
            let e = expect.entry((id, k)).or_default();
            e.0 += 1;
            e.1 += made as u64;
        }
        let data = parse_shot_events(csv.as_bytes(), EntityKind::Player).unwrap();
        prop_assert_eq!(data.total_attempts(), events.len() as u64);
        for row in data.rows() {
            let id: u8 = row.key.entity_id[1..].parse().unwrap();
            for k in 0..Region::COUNT {
                let (a, m) = expect.get(&(id, k)).copied().unwrap_or((0, 0));
                prop_assert_eq!(row.attempts()[k], a);
                prop_assert_eq!(row.makes()[k], m);
            }
        }
        let again = parse_aggregates(data.to_aggregate_csv().as_slice(), EntityKind::Player).unwrap();
        prop_assert_eq!(again, data);
    }

    #[test]
    fn top_n_keeps_the_largest(data in dataset_strategy(10), n in 1usize..6) {
        let season = data.seasons()[0];
        let top = top_n_shot_takers(&data, n, Some(season)).unwrap();
        let in_season: Vec<&RegionCounts> = data.rows().iter().filter(|r| r.key.season == season).collect();
        prop_assert_eq!(top.dataset.len(), n.min(in_season.len()));
        prop_assert_eq!(top.short, in_season.len() < n);
        let kept_min = top.dataset.rows().iter().map(|r| r.total_attempts()).min().unwrap();
        let dropped_max = in_season
            .iter()
            .filter(|r| top.dataset.get(&r.key).is_none())
            .map(|r| r.total_attempts())
            .max();
        if let Some(d) = dropped_max {
            prop_assert!(d <= kept_min);
        }
    }

    #[test]
    fn correlation_is_affine_invariant(
        xs in prop::collection::vec(-100.0..100.0f64, 3..30),
        noise in prop::collection::vec(-50.0..50.0f64, 30),
        a in 0.1..10.0f64,
        b in -50.0..50.0f64,
    ) {
        let x: BTreeMap<String, f64> = xs.iter().enumerate().map(|(i, &v)| (format!("e{i}"), v)).collect();
        let y: BTreeMap<String, f64> = xs.iter().enumerate().map(|(i, &v)| (format!("e{i}"), 0.5 * v + noise[i])).collect();
        prop_assume!(correlate(&x, &y).is_ok());
        let r = correlate(&x, &y).unwrap().r;
        prop_assert!((-1.0..=1.0).contains(&r));
        let shifted: BTreeMap<String, f64> = x.iter().map(|(k, v)| (k.clone(), a * v + b)).collect();
        let flipped: BTreeMap<String, f64> = x.iter().map(|(k, v)| (k.clone(), -a * v + b)).collect();
        prop_assert!((correlate(&shifted, &y).unwrap().r - r).abs() < 1e-9);
        prop_assert!((correlate(&flipped, &y).unwrap().r + r).abs() < 1e-9);
        prop_assert!((correlate(&y, &x).unwrap().r - r).abs() < 1e-12);
    }

    #[test]
    fn ranking_survives_increasing_affine_maps(
        samples in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 1..20), 1..8),
        a in 0.5..4.0f64,
        b in -3.0..3.0f64,
        by_mean in any::<bool>(),
    ) {
        let by = if by_mean { RankBy::Mean } else { RankBy::Median };
        let rows = |f: &dyn Fn(f64) -> f64| -> Vec<String> {
            let summaries = samples
                .iter()
                .enumerate()
                .map(|(i, v)| summarize(format!("e{i}"), &v.iter().map(|&x| f(x)).collect::<Vec<_>>()).unwrap())
                .collect();
            rank_entities(summaries, by).into_iter().map(|r| r.summary.label).collect()
        };
        let base = rows(&|x| x);
        // rounding can create or break exact ties, so only compare when keys are well apart
        let keys: Vec<f64> = samples
            .iter()
            .map(|v| {
                let s = summarize("k", v).unwrap();
                if by_mean { s.mean } else { s.median }
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
        prop_assert_eq!(rows(&|x| a * x + b), base);
    }

    #[test]
    fn summary_intervals_nest(values in prop::collection::vec(-1e6..1e6f64, 1..200)) {
        let s = summarize("x", &values).unwrap();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= s.ci95.0 && s.ci95.0 <= s.ci80.0 && s.ci80.0 <= s.median);
        prop_assert!(s.median <= s.ci80.1 && s.ci80.1 <= s.ci95.1 && s.ci95.1 <= max);
        prop_assert!(min - 1e-9 <= s.mean && s.mean <= max + 1e-9);
        prop_assert!(s.sd >= 0.0);
        prop_assert_eq!(s.n, values.len());
    }

    #[test]
    fn quantiles_match_linear_interpolation(mut values in prop::collection::vec(-100.0..100.0f64, 2..50), prob in 0.0..=1.0f64) {
        values.sort_by(f64::total_cmp);
        let h = (values.len() - 1) as f64 * prob;
        let lo = h.floor() as usize;
        let expect = if lo + 1 >= values.len() { values[lo] } else { values[lo] + (h - lo as f64) * (values[lo + 1] - values[lo]) };
        prop_assert!((quantile_sorted(&values, prob) - expect).abs() < 1e-9);
    }

    #[test]
    fn binomial_quantile_inverts_the_cdf(n in 0u64..3000, p in 0.0..=1.0f64, u in 0.0..1.0f64) {
        let k = binomial_quantile(n, p, u);
        prop_assert!(k <= n);
        if n > 0 && p > 0.0 && p < 1.0 {
            let dist = Binomial::new(p, n).unwrap();
            prop_assert!(dist.cdf(k) >= u - 1e-9, "cdf({}) = {} < {}", k, dist.cdf(k), u);
            if k > 0 {
                prop_assert!(dist.cdf(k - 1) < u + 1e-9, "cdf({}) = {} >= {}", k - 1, dist.cdf(k - 1), u);
            }
        }
    }

    #[test]
    fn binomial_quantile_is_monotone(n in 1u64..500, p in 0.0..=1.0f64, u1 in 0.0..1.0f64, u2 in 0.0..1.0f64, dp in 0.0..0.5f64) {
        let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        prop_assert!(binomial_quantile(n, p, lo) <= binomial_quantile(n, p, hi));
        prop_assert!(binomial_quantile(n, p, lo) <= binomial_quantile(n, (p + dp).min(1.0), lo));
    }

    #[test]
    fn memberships_are_distributions(state in state_strategy(3, 4, 1), (a, m) in counts_strategy(Region::COUNT, 50)) {
        let counts = RegionCounts::new(EntityKey::new("x", 2021), a, m).unwrap();
        let (sel, acc) = membership_probs(&counts, &state).unwrap();
        for probs in [&sel, &acc] {
            prop_assert!(probs.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn totals_stay_in_bounds(
        states in prop::collection::vec(state_strategy(2, 2, 1), 1..4),
        (a, m) in counts_strategy(Region::COUNT, 30),
        n_shots in 1u64..3000,
        seed in any::<u64>(),
    ) {
        let counts = RegionCounts::new(EntityKey::new("x", 2021), a, m).unwrap();
        let data = Dataset::new(EntityKind::Team, RegionScheme::nba(), vec![counts.clone()]).unwrap();
        let post = posterior(&data, states);
        let cfg = PredictiveConfig { n_shots, samples_per_draw: 3, seed, keep_region_detail: true, ..PredictiveConfig::default() };
        let out = expected_points(&counts, &post, &cfg).unwrap();
        prop_assert_eq!(out.totals.len(), post.len() * 3);
        let points = RegionScheme::nba().points();
        for (t, d) in out.totals.iter().zip(out.region_detail.as_ref().unwrap()) {
            prop_assert!(*t <= 3 * n_shots);
            prop_assert_eq!(d.attempts.iter().sum::<u64>(), n_shots);
            prop_assert!(d.makes.iter().zip(&d.attempts).all(|(m, a)| m <= a));
            let recomputed: u64 = d.makes.iter().zip(&points).map(|(&m, &p)| m * p as u64).sum();
            prop_assert_eq!(recomputed, *t);
        }
    }

    #[test]
    fn higher_accuracy_never_lowers_coupled_totals(
        state in state_strategy(1, 1, 1),
        bump in prop::collection::vec(0.0..0.5f64, Region::COUNT),
        seed in any::<u64>(),
    ) {
        let counts = RegionCounts::new(EntityKey::new("x", 2021), vec![5; Region::COUNT], vec![2; Region::COUNT]).unwrap();
        let data = Dataset::new(EntityKind::Team, RegionScheme::nba(), vec![counts.clone()]).unwrap();
        let mut better = state.clone();
        for (q, b) in better.q[0].iter_mut().zip(&bump) {
            *q = (*q + b).min(0.999);
        }
        let cfg = PredictiveConfig { n_shots: 500, samples_per_draw: 20, seed, ..PredictiveConfig::default() };
        let base = expected_points(&counts, &posterior(&data, vec![state]), &cfg).unwrap();
        let up = expected_points(&counts, &posterior(&data, vec![better]), &cfg).unwrap();
        prop_assert!(base.totals.iter().zip(&up.totals).all(|(a, b)| a <= b));
    }
}

fn three_teams() -> Dataset {
    let rows = [
        ("BOS", [300, 40, 35, 90, 120, 260, 200], [110, 16, 14, 40, 48, 170, 160]),
        ("NYK", [280, 30, 45, 70, 150, 240, 180], [95, 11, 19, 30, 61, 150, 140]),
        ("MIA", [60, 10, 5, 180, 190, 300, 220], [18, 3, 2, 80, 77, 190, 170]),
    ];
    let rows = rows
        .iter()
        .map(|(id, a, m)| RegionCounts::new(EntityKey::new(*id, 2021), a.to_vec(), m.to_vec()).unwrap())
        .collect();
    Dataset::new(EntityKind::Team, RegionScheme::nba(), rows).unwrap()
}

#[test]
fn average_team_of_one_equals_that_team() {
    let data = three_teams();
    let one = data.filter(|r| r.key.entity_id == "NYK").unwrap();
    let post = hoopstat::sampler::run_chain(&one, &Priors::new(2, 2, 5.0, 5.0, 5.0), &ChainConfig::new(300, 100, 1, 3)).unwrap();
    let cfg = PredictiveConfig { n_shots: 800, samples_per_draw: 2, seed: 17, ..PredictiveConfig::default() };
    let avg = average_team_points(&post, &cfg).unwrap();
    let team = expected_points(&one.rows()[0], &post, &cfg).unwrap();
    assert_eq!(avg.totals, team.totals);
}

#[test]
fn average_team_mean_is_the_mean_over_teams() {
    let data = three_teams();
    let post = hoopstat::sampler::run_chain(&data, &Priors::new(3, 3, 5.0, 5.0, 5.0), &ChainConfig::new(700, 200, 1, 5)).unwrap();
    let cfg = PredictiveConfig { n_shots: 1000, samples_per_draw: 40, seed: 2, ..PredictiveConfig::default() };
    let avg = average_team_points(&post, &cfg).unwrap();
    let per_team: Vec<f64> = data.rows().iter().map(|r| expected_points(r, &post, &cfg).unwrap().mean_total()).collect();
    let expect = per_team.iter().sum::<f64>() / per_team.len() as f64;
    let n = avg.totals.len() as f64;
    let mean = avg.mean_total();
    let sd = (avg.totals.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // per-team means carry their own Monte Carlo error, roughly a third of the mixture's
    let tol = 4.0 * sd / n.sqrt() * 1.5;
    assert!((mean - expect).abs() < tol, "{mean} vs {expect} (tol {tol})");
}

#[test]
fn uniform_sample_intervals() {
    let values: Vec<f64> = (0..100_001).map(|i| i as f64 / 100_000.0).collect();
    let s = summarize("u", &values).unwrap();
    assert!((s.ci95.0 - 0.025).abs() < 1e-12 && (s.ci95.1 - 0.975).abs() < 1e-12);
    assert!((s.ci80.0 - 0.10).abs() < 1e-12 && (s.ci80.1 - 0.90).abs() < 1e-12);
    assert!((s.median - 0.5).abs() < 1e-12);
    assert!((s.sd - (1.0f64 / 12.0).sqrt()).abs() < 1e-4);
}
