use scuttle::config::Config;
use scuttle::dynmodel::load_model;
use scuttle::simworld::{idx, step, Action, ActionKind, StateVector, WorldState};
use std::path::Path;

fn main() {
    let cfg = Config::default();
    // A moving frame: legs 8 and 10 rad/s, yaw 0, roll phase at peak.
    let make_probe = |v_body: f64, omega_z: f64, roll_amp: f64| {
        let mut s = StateVector::zeros();
        s.0[idx::X] = 1.0;
        s.0[idx::VX] = v_body;
        s.0[idx::COS_ROLL] = roll_amp.cos();
        s.0[idx::SIN_ROLL] = roll_amp.sin();
        s.0[idx::COS_PITCH] = 1.0;
        s.0[idx::COS_YAW] = 1.0;
        s.0[idx::WZ] = omega_z;
        s.0[idx::COS_AL] = 1.0;
        s.0[idx::COS_AR] = 1.0;
        s.0[idx::V_AL] = 8.0;
        s.0[idx::V_AR] = 10.0;
        s.0[idx::BEMF_L] = cfg.sim.k_bemf * 8.0;
        s.0[idx::BEMF_R] = cfg.sim.k_bemf * 10.0;
        s.0[idx::V_BAT] = 4.09;
        s
    };
    let a = Action::new(8.0, 10.0, ActionKind::VelocitySetpoint);
    let amp = cfg.sim.roll_amp_coeff * 9.0;
    // Echo-consistent probes for each terrain (unit gain ~0.925).
    let carpet_probe = make_probe(0.30, 0.44, amp);
    let styro_probe = make_probe(0.14, 0.30, amp);

    // Ground truth next-step delta yaw per terrain via the simulator.
    for (name, v, wz) in [("carpet", 0.30, 0.44), ("styrofoam", 0.14, 0.30)] {
        let t = cfg.terrain(name).unwrap();
        let mut ws = WorldState::initial(&cfg.sim);
        ws.x = 1.0; ws.v_body = v; ws.omega_z = wz; ws.roll = amp;
        ws.leg_vel_l = 8.0; ws.leg_vel_r = 10.0; ws.unit_gain = 0.925;
        // t=... roll phase: sin(2 pi f t)=1 -> t = 1/(4 f)
        ws.t = 1.0 / (4.0 * t.roll_freq);
        let mut rng = scuttle::rng::stream(0, 0);
        let mut quiet = t.clone();
        quiet.slip_sigma = 0.0;
        let next = step(&ws, &a, &quiet, &cfg.sim, 0.1, &mut rng).unwrap();
        println!("true {name:10}: dyaw {:+.4} dvx {:+.4}", next.yaw - ws.yaw, next.v_body * next.yaw.cos() - v);
    }
    for m in ["carpet", "styrofoam", "joint2"] {
        let model = load_model(Path::new(&format!("/tmp/exp/model-{m}.rchm"))).unwrap();
        for (pname, probe) in [("carpet-echo", &carpet_probe), ("styro-echo", &styro_probe)] {
            let d = model.forward(probe, &a, None).unwrap();
            println!("model {m:10} probe {pname:12}: dyaw {:+.4} dvx {:+.4}", d[idx::SIN_YAW], d[idx::VX]);
        }
    }
}
