use ring_core::catalog;
use ring_core::search::{find_isomorphism, grank_estimate, search_rings, Equivalence, DEFAULT_RESTARTS};

#[test]
fn catalog_granks() {
    let expect = [
        ("C", 3),
        ("R_H2", 2),
        ("R_H4", 4),
        ("R_O4", 4),
        ("R_H4-I", 5),
        ("R_H4-II", 5),
        ("R_O4-I", 5),
        ("R_O4-II", 5),
        ("H", 8),
    ];
    for (name, grank) in expect {
        let spec = catalog::lookup(name).unwrap();
        let report = grank_estimate(spec.m_tensor(), 9, DEFAULT_RESTARTS, 2024).unwrap();
        assert_eq!(report.grank, grank, "{name}: {:?}", report.residuals);
        let certified = report.residuals.last().unwrap().1;
        assert!(certified < 1e-8);
        if grank > report.proven_lower {
            let below = report.residuals[report.residuals.len() - 2];
            assert_eq!(below.0, grank - 1);
            assert!(below.1 > 1e-3, "{name}: residual at r-1 = {}", below.1);
        }
    }
}

#[test]
fn n4_search_reproduces_catalog() {
    let res = search_rings(4, 9, DEFAULT_RESTARTS, 1).unwrap();
    assert_eq!(res.raw_permutations, 4);
    assert_eq!(res.classes.len(), 2);
    let mut mins: Vec<usize> = res.classes.iter().map(|c| c.min_grank).collect();
    mins.sort();
    assert_eq!(mins, vec![4, 5]);
    for class in &res.classes {
        let want = if class.min_grank == 4 { 2 } else { 4 };
        assert_eq!(class.variants.len(), want, "class {:?}", class.p);
        eprintln!("class {:?} size {} min {}", class.p, class.class_size, class.min_grank);
        let mut hist = std::collections::BTreeMap::new();
        for p in &class.patterns {
            *hist.entry(p.report.grank).or_insert(0) += 1;
        }
        eprintln!("  grank histogram {hist:?}");
    }
    let catalog = catalog::all();
    let mut matched = Vec::new();
    for cand in res.rings() {
        let m = cand.tensor().unwrap();
        assert_eq!(cand.associative, Some(true));
        assert_eq!(cand.commutative, Some(true));
        let hit = catalog
            .iter()
            .find_map(|spec| find_isomorphism(&m, spec.m_tensor(), Equivalence::Permutation).map(|r| (spec, r)))
            .expect("every discovered ring is a catalog ring");
        assert_eq!(hit.1.apply(&m), *hit.0.m_tensor());
        matched.push(hit.0.name.clone());
    }
    matched.sort();
    assert_eq!(matched, vec!["R_H4", "R_H4-I", "R_H4-II", "R_O4", "R_O4-I", "R_O4-II"]);
}
