use cssi_core::ncd::{extract_decomposition, train, GateSource, NcdData, NcdHyper, NcdModel};
use cssi_core::synth::make_example;
use cssi_core::{ExampleKind, ParentSet};

fn splits(which: ExampleKind, n: usize, seed: u64) -> (NcdData, NcdData, NcdData) {
    let ds = make_example(which).sample(n, seed).unwrap();
    let (tr, va, te) = ds.split([0.8, 0.1, 0.1]).unwrap();
    let conv = |d| NcdData::from_dataset(d, 0).unwrap();
    (conv(&tr), conv(&va), conv(&te))
}

#[test]
fn example1_gates_follow_the_regions() {
    let (tr, va, te) = splits(ExampleKind::Example1, 20_000, 1);
    let hyper = NcdHyper { hidden: vec![64, 64, 64], epochs: 25, seed: 3, ..Default::default() };
    let (model, _) = train(NcdModel::for_data(&tr, hyper).unwrap(), &tr, &va).unwrap();
    let pi = model.parent_scores(te.x.view()).unwrap();

    let deep: Vec<usize> = (0..te.len()).filter(|&i| te.x[[i, 0]] * te.x[[i, 1]] < 0.25).take(100).collect();
    assert_eq!(deep.len(), 100);
    let ordered = deep.iter().filter(|&&i| pi[[i, 0]] > pi[[i, 1]]).count();
    assert!(ordered >= 90, "pi1 > pi2 on {ordered}/100 points deep inside the first region");

    let rows: Vec<Vec<f64>> = te.x.rows().into_iter().map(|r| r.to_vec()).collect();
    let pred = extract_decomposition(&model, &rows, 0.5, 0.05).unwrap();
    let share = |s: ParentSet| pred.patterns.iter().find(|p| p.0 == s).map_or(0, |p| p.1);
    let dominant = share(ParentSet::from_one_based(&[1])) + share(ParentSet::from_one_based(&[2]));
    assert!(dominant as f64 >= 0.9 * te.len() as f64, "{:?}", pred.patterns);
}

#[test]
fn oracle_gates_lose_no_information() {
    let (tr, va, _) = splits(ExampleKind::Example1, 20_000, 2);
    let nll = |gates| {
        let hyper = NcdHyper { hidden: vec![64, 64], epochs: 15, n_mc: 1, gates, seed: 5, ..Default::default() };
        let (m, _) = train(NcdModel::for_data(&tr, hyper).unwrap(), &tr, &va).unwrap();
        m.mean_nll(&va, 0.3, 7).unwrap()
    };
    let (oracle, open) = (nll(GateSource::Oracle), nll(GateSource::AllOpen));
    assert!(oracle <= open + 0.05, "oracle {oracle} vs open {open}");
}

#[test]
fn toy2d_loss_decreases_early() {
    let (tr, va, _) = splits(ExampleKind::Toy2d, 20_000, 3);
    let hyper = NcdHyper { hidden: vec![64, 64], epochs: 5, seed: 1, ..Default::default() };
    let (_, hist) = train(NcdModel::for_data(&tr, hyper).unwrap(), &tr, &va).unwrap();
    let losses: Vec<f64> = hist.records.iter().map(|r| r.train_nll).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}
