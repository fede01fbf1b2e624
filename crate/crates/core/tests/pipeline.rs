use geocompass::decoder::DecoderModel;
use geocompass::enumerate::{local_enumeration, EnumParams};
use geocompass::harness::{default_seed_peptide, ModelSpec};
use geocompass::oracles::{SequenceOracle, SyntheticPotential};
use geocompass::pogs::{decode_path, init_path, optimize_path, path_energy, OptimizerConfig};
use geocompass::surrogate::{lebo, LeboParams};
use nalgebra::DVector;

#[test]
fn enumeration_feeds_optimizer() {
    let model = ModelSpec::default().build().unwrap();
    let seed = default_seed_peptide(&model).unwrap();
    let params = EnumParams { m: 3, cap: 64, ..EnumParams::default() };
    let pool = local_enumeration(&model, &seed, &params, 11).unwrap();
    assert!(pool.contains(&seed));
    assert!(pool.iter().all(|p| p.len() <= model.length));
    assert_eq!(pool, local_enumeration(&model, &seed, &params, 11).unwrap());

    let oracle = SequenceOracle::synthetic("weighted-residue", 2, model.length).unwrap();
    let lp = LeboParams { budget: 15, enumeration: params, ..LeboParams::default() };
    let out = lebo(&model, |p| oracle.eval(p), &seed, &lp, 4).unwrap();
    assert!(out.best.value <= oracle.eval(&seed));
    assert_eq!(out.best.value, out.history.last().unwrap().best_so_far);
}

#[test]
fn path_search_lowers_energy() {
    let model = DecoderModel::random_toy_mlp(3, 6, 16, 5, 1.0);
    let pot = SyntheticPotential::synthetic("linear-residue-score", 1, 5).unwrap();
    let za = DVector::from_element(6, 0.6);
    let zb = DVector::from_element(6, -0.6);
    let path = init_path(&za, &zb, 6.0, 0.01, 0.1).unwrap();
    let before = path_energy(&model, &path, &pot).unwrap().total;
    let cfg = OptimizerConfig { lr: 0.01, max_steps: 200, ..OptimizerConfig::default() };
    let out = optimize_path(&model, &path, &pot, &cfg).unwrap();
    let after = path_energy(&model, &out.path, &pot).unwrap().total;
    assert!(after < before, "{after} !< {before}");
    assert_eq!(out.path.waypoints.first(), path.waypoints.first());
    assert_eq!(out.path.waypoints.last(), path.waypoints.last());
    let peptides = decode_path(&model, &out.path).unwrap();
    assert_eq!(peptides.first(), Some(&model.argmax_peptide(&za).unwrap()));
    assert_eq!(peptides.last(), Some(&model.argmax_peptide(&zb).unwrap()));
    assert!(peptides.windows(2).all(|w| w[0] != w[1]));
}
