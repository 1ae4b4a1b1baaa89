use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::network::tests::record;
use crate::data::{derive_features, load_network};

/// `n` segments along two rows of a strip; regime `i % 2` is encoded in the
/// road type so features separate the regimes.
fn strip(n: usize) -> RoadNetwork {
    let recs: Vec<_> = (0..n)
        .map(|i| {
            let x = (i / 2) as f64 * 0.01;
            let y = (i % 2) as f64 * 0.01;
            let mut r = record(
                &format!("s{i:03}"),
                (&format!("a{i}"), x, y),
                (&format!("b{i}"), x + 0.005, y + 0.002),
            );
            if i % 2 == 1 {
                r.road_type = "highway".into();
                r.speed_limit_mph = 65.0;
            }
            r
        })
        .collect();
    load_network(recs).unwrap()
}

/// Regime means 55 on matching (row, column) regimes, 15 otherwise; column
/// regime is the first or second half of the day.
fn matrix(net: &RoadNetwork, rows: &[usize], m: usize, missing: f64, seed: u64) -> SpeedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<SegmentId> = net.segment_ids().cloned().collect();
    let segs: Vec<SegmentId> = rows.iter().map(|&r| ids[r].clone()).collect();
    let values = Array2::from_shape_fn((rows.len(), m), |(i, j)| {
        let base = if rows[i] % 2 == j * 2 / m { 55.0 } else { 15.0 };
        base + rng.gen_range(-1.0..1.0)
    });
    let mut mask = Array2::from_shape_fn((rows.len(), m), |_| !rng.gen_bool(missing));
    for i in 0..rows.len() {
        mask[[i, i % m]] = true;
    }
    for j in 0..m {
        mask[[j % rows.len(), j]] = true;
    }
    SpeedMatrix::new(values, mask, segs, (1440 / m) as u32, crate::data::DayType::Weekday).unwrap()
}

fn cfg(variant: ModelVariant, k: usize, t_max: usize) -> PredictorConfig {
    let mut c = PredictorConfig::new(variant).with_k(k).with_seed(3);
    c.t_max = t_max;
    c.lambda = 0.0;
    c
}

#[test]
fn variant_names_round_trip() {
    for v in ModelVariant::ALL {
        assert_eq!(v.to_string().parse::<ModelVariant>().unwrap(), v);
    }
    assert_eq!("LGP+".parse::<ModelVariant>().unwrap(), ModelVariant::LgpSide);
    assert!("svm".parse::<ModelVariant>().is_err());
    assert!(ModelVariant::LgrSide.uses_side_info() && ModelVariant::LgrSide.is_local());
    assert!(!ModelVariant::Gp.is_local());
}

#[test]
fn config_validation() {
    let mut c = cfg(ModelVariant::Lgp, 0, 600);
    assert!(c.validate().is_err());
    c.k = 2;
    c.t_max = 1;
    assert!(c.validate().is_err());
}

#[test]
fn global_sample_is_capped_at_t_max() {
    let net = strip(20);
    let rows: Vec<usize> = (0..20).collect();
    let d = matrix(&net, &rows, 24, 0.0, 1);
    let features = derive_features(&net);
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Gp, 1, 100)).unwrap();
    assert_eq!(p.fits_performed(), 1);
    assert_eq!(p.fitted_models(), vec![((0, 0), 100)]);

    let all = learn(&d, &net, &features, &cfg(ModelVariant::Gp, 1, 10_000)).unwrap();
    assert_eq!(all.fitted_models(), vec![((0, 0), d.nnz())]);
}

fn all_queries(net: &RoadNetwork, ts: &[usize]) -> Vec<Query> {
    net.segment_ids()
        .flat_map(|s| ts.iter().map(move |&t| Query::new(s.clone(), t)))
        .collect()
}

#[test]
fn single_cluster_lgp_equals_gp() {
    let net = strip(16);
    let rows: Vec<usize> = (0..16).step_by(2).chain((1..16).step_by(4)).collect();
    let d = matrix(&net, &rows, 12, 0.3, 2);
    let features = derive_features(&net);
    let q = all_queries(&net, &[3, 7, 12]);
    let gp = learn(&d, &net, &features, &cfg(ModelVariant::Gp, 1, 40)).unwrap();
    let lgp = learn(&d, &net, &features, &cfg(ModelVariant::Lgp, 1, 40)).unwrap();
    let a = gp.predict(&q).unwrap();
    let b = lgp.predict(&q).unwrap();
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_predictions(&a, &mut ca).unwrap();
    write_predictions(&b, &mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn lgp_routes_planted_regimes_and_caches() {
    let net = strip(24);
    let rows: Vec<usize> = (0..24).collect();
    let d = matrix(&net, &rows, 16, 0.1, 4);
    let features = derive_features(&net);
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Lgp, 2, 50)).unwrap();
    assert_eq!(p.local_subsets().unwrap().k(), 2);
    assert_eq!(p.fits_performed(), 0);

    // regime (0, 1): even segments in the second half of the day
    let q: Vec<Query> = rows
        .iter()
        .filter(|r| *r % 2 == 0)
        .flat_map(|&r| [8, 11, 15].map(|t| Query::new(d.segments()[r].clone(), t)))
        .collect();
    let out = p.predict(&q).unwrap();
    let key = (out[0].cluster_i, out[0].cluster_j);
    assert!(out.iter().all(|o| (o.cluster_i, o.cluster_j) == key && !o.fallback));
    assert_eq!(p.fits_performed(), 1);
    let pool = p.local_subsets().unwrap().get(key.0, key.1);
    assert!(pool.iter().all(|&(i, j, _)| i % 2 == 0 && j >= 8));

    // the other regimes land elsewhere; repeated queries reuse the cache
    let other = p.predict(&[Query::new(d.segments()[1].clone(), 9)]).unwrap();
    assert_ne!((other[0].cluster_i, other[0].cluster_j), key);
    p.predict(&q).unwrap();
    assert_eq!(p.fits_performed(), 2);
}

#[test]
fn unseen_segments_map_by_features() {
    let net = strip(24);
    let rows: Vec<usize> = (0..16).collect();
    let d = matrix(&net, &rows, 16, 0.0, 5);
    let features = derive_features(&net);
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Lgp, 2, 30)).unwrap();
    let (spatial, _) = p.clusterings().unwrap();
    let even = spatial.labels()[0];
    let odd = spatial.labels()[1];
    assert_ne!(even, odd);
    let out = p
        .predict(&[Query::new("s020", 2), Query::new("s021", 2)])
        .unwrap();
    assert_eq!(out[0].cluster_i, even);
    assert_eq!(out[1].cluster_i, odd);
}

#[test]
fn tiny_pools_fall_back_to_global() {
    let net = strip(8);
    let rows: Vec<usize> = (0..8).collect();
    let d = matrix(&net, &rows, 8, 0.0, 6);
    let features = derive_features(&net);
    // a fine grid leaves many cells empty
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Lgr, 8, 30)).unwrap();
    let out = p.predict(&all_queries(&net, &[1])).unwrap();
    for o in &out {
        assert_eq!(o.fallback, p.slot_pool(o.cluster_i).len() < MIN_LOCAL_POOL);
    }
    assert!(p.fitted_models().iter().all(|(_, n)| *n >= MIN_LOCAL_POOL));
}

#[test]
fn fallback_is_flagged() {
    let net = strip(6);
    let rows: Vec<usize> = (0..6).collect();
    let values = Array2::from_shape_fn((6, 4), |(i, j)| 20.0 + i as f64 + j as f64);
    let mut mask = Array2::from_elem((6, 4), true);
    // segment s005 keeps a single observation
    for j in 1..4 {
        mask[[5, j]] = false;
    }
    let ids: Vec<SegmentId> = net.segment_ids().cloned().collect();
    let d = SpeedMatrix::new(
        values,
        mask,
        rows.iter().map(|&r| ids[r].clone()).collect(),
        360,
        crate::data::DayType::Weekday,
    )
    .unwrap();
    let features = derive_features(&net);
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Lgr, 6, 30)).unwrap();
    let cell = p.grid().unwrap().cell_of(&ids[5]).unwrap();
    assert!(p.slot_pool(cell).len() < MIN_LOCAL_POOL);
    let out = p.predict(&[Query::new(ids[5].clone(), 2)]).unwrap();
    assert!(out[0].fallback);
    assert_eq!(p.fitted_models()[0].0, (0, 0));
}

#[test]
fn lgr_ignores_time() {
    let net = strip(12);
    let rows: Vec<usize> = (0..12).collect();
    let d = matrix(&net, &rows, 10, 0.0, 7);
    let features = derive_features(&net);
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Lgr, 2, 30)).unwrap();
    let out = p
        .predict(&[Query::new("s000", 1), Query::new("s000", 9)])
        .unwrap();
    assert_eq!(out[0].cluster_i, out[1].cluster_i);
    assert_eq!(out[0].cluster_j, 0);
    assert_eq!(p.fits_performed(), 1);
}

#[test]
fn parallel_and_serial_agree() {
    let net = strip(20);
    let rows: Vec<usize> = (0..20).collect();
    let d = matrix(&net, &rows, 12, 0.2, 8);
    let features = derive_features(&net);
    let q = all_queries(&net, &[0, 5, 11, 13]);
    for v in [ModelVariant::LgpSide, ModelVariant::Lgr, ModelVariant::GpSide] {
        let serial = learn(&d, &net, &features, &cfg(v, 2, 30)).unwrap();
        let par = learn(&d, &net, &features, &cfg(v, 2, 30).with_parallel(true)).unwrap();
        assert_eq!(serial.predict(&q).unwrap(), par.predict(&q).unwrap(), "{v}");
    }
}

#[test]
fn unknown_segment_is_an_error() {
    let net = strip(6);
    let rows: Vec<usize> = (0..6).collect();
    let d = matrix(&net, &rows, 6, 0.0, 9);
    let features = derive_features(&net);
    let p = learn(&d, &net, &features, &cfg(ModelVariant::Gp, 1, 20)).unwrap();
    assert!(matches!(
        p.predict(&[Query::new("nope", 0)]),
        Err(PredictorError::UnknownSegment(_))
    ));
}

#[test]
fn predictions_csv_layout() {
    let p = Prediction {
        segment: SegmentId::from("a"),
        t: 7,
        mean: 31.5,
        raw_mean: 31.5,
        variance: 0.25,
        cluster_i: 2,
        cluster_j: 1,
        fallback: true,
    };
    let mut buf = Vec::new();
    write_predictions(&[p], &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "segment_id,t,mean_mph,variance,cluster_i,cluster_j,fallback_flag\na,7,31.5,0.25,2,1,1\n"
    );
}
