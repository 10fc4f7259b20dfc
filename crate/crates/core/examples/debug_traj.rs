use scuttle::config::Config;
use scuttle::datapipe::load_dataset;
use scuttle::ddrive::closest_segment;
use scuttle::dynmodel::{load_model, Batch};
use scuttle::mpc::{mpc_rollout, path_geometry, EmbeddingProvider};
use scuttle::report::eval_start_state;
use scuttle::simworld::{make_path, PathKind};
use std::path::Path;

fn main() {
    let cfg = Config::default();
    // Prediction-level cross loss matrix.
    let ds_c = load_dataset(Path::new("/tmp/exp/dataset-carpet-r200.rchd")).unwrap();
    let ds_s = load_dataset(Path::new("/tmp/exp/dataset-styrofoam-r200.rchd")).unwrap();
    for m in ["carpet", "styrofoam", "joint2"] {
        let model = load_model(Path::new(&format!("/tmp/exp/model-{m}.rchm"))).unwrap();
        let mut line = format!("model {m:10}");
        for (dn, ds) in [("carpet", &ds_c), ("styro", &ds_s)] {
            let (x, t) = ds.to_matrices(false);
            let loss = model.loss(&Batch::new(x, t).unwrap()).unwrap();
            line += &format!("  on {dn}: {loss:7.4}");
        }
        println!("{line}");
    }
    // Cost decomposition of closed-loop runs.
    let path = make_path(PathKind::Straight, cfg.eval.path_scale).unwrap();
    for (m, terr) in [("carpet", "styrofoam"), ("styrofoam", "styrofoam"), ("joint2", "styrofoam"), ("styrofoam", "carpet"), ("carpet", "carpet"), ("joint2", "carpet")] {
        let model = load_model(Path::new(&format!("/tmp/exp/model-{m}.rchm"))).unwrap();
        let terrain = cfg.terrain(terr).unwrap();
        let (mut sp, mut sh, mut sf) = (0.0, 0.0, 0.0);
        for seed in scuttle::report::seeds_for(200, 5) {
            let start = eval_start_state(&cfg, seed);
            let run = mpc_rollout(&cfg.sim, terrain, &model, &path, &cfg.mpc, &cfg.features, &EmbeddingProvider::None, &start, 5.0, seed).unwrap();
            let mut arc = closest_segment(run.states[0].pos(), &path).arc;
            for s in &run.states[1..] {
                let (g, na) = path_geometry(s, &path, arc);
                arc = na;
                sp += cfg.mpc.f_p * g.p; sh += cfg.mpc.f_h * g.h; sf += cfg.mpc.f_f * g.f;
            }
        }
        println!("{m:10} on {terr:10}: p-cost {:7.2}  h-cost {:6.2}  f-gain {:7.2}  net {:7.2}", sp/5.0, sh/5.0, sf/5.0, (sp+sh-sf)/5.0);
    }
}
