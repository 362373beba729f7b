use geoaudit::ambiguity::{AmbiguityConfig, Auditor};
use geoaudit::detector::{assemble_features, evaluate, split_of, train_detector, Split, DEFAULT_CAP, DEFAULT_LAMBDA};
use geoaudit::synthetic::{gaussian_clusters, ClusterConfig};

#[test]
fn planted_ood_is_gated() {
    let t = std::time::Instant::now();
    let fx = gaussian_clusters(&ClusterConfig::default());
    let mut aud = Auditor::from_bundle(&fx.bundle, AmbiguityConfig::default()).unwrap();
    let tau = aud.calibrate(99.0).unwrap();
    let eval = aud.profile_set(fx.bundle.eval.as_ref().unwrap(), "eval").unwrap();
    let (mut ood_abs, mut ood_n, mut id_abs, mut id_n) = (0, 0, 0, 0);
    for (p, &o) in eval.iter().zip(&fx.ood) {
        let a = p.zeta > tau;
        if o {
            ood_n += 1;
            ood_abs += a as usize;
        } else {
            id_n += 1;
            id_abs += a as usize;
        }
    }
    let ood_rate = ood_abs as f64 / ood_n as f64;
    let id_rate = id_abs as f64 / id_n as f64;
    println!("tau {tau} ood {ood_rate} id {id_rate} elapsed {:?}", t.elapsed());
    assert!(ood_rate >= 0.9 && id_rate <= 0.03);

    let feats = assemble_features(&eval, DEFAULT_CAP);
    let pos = feats.filter(|id| fx.ood[id[5..].parse::<usize>().unwrap()]);
    let neg = feats.filter(|id| !fx.ood[id[5..].parse::<usize>().unwrap()]);
    let train = |s| move |id: &str| split_of(id) == s;
    let model = train_detector(&pos.filter(train(Split::Train)), &neg.filter(train(Split::Train)), DEFAULT_LAMBDA).unwrap();
    let test = geoaudit::detector::FeatureTable::labeled(&pos.filter(|id| split_of(id) != Split::Train), &neg.filter(|id| split_of(id) != Split::Train)).unwrap();
    let m = evaluate(&model, &test).unwrap();
    println!("{m:?}");
    assert!(m.auroc >= 0.95);
}
