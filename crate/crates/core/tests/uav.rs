use reachmesh::oracle::propagate_dense;
use reachmesh::refine::{run_algorithm1, run_algorithm2};
use reachmesh::scp::{scp_loop, NoRefine, ScpOptions};
use reachmesh::transcription::{trapezoid_defects, Mesh, ProblemDef};

#[test]
fn table1_plain_run_cuts_a_corner() {
    let p = ProblemDef::table1();
    let m = Mesh::uniform(10);
    let run = scp_loop(&p, m.clone(), p.linear_guess(&m), &ScpOptions::default(), &mut NoRefine).unwrap();
    assert!(run.converged);
    assert!(run.history.len() <= 15, "{}", run.history.len());
    assert_eq!(run.mesh, m);
    let dense = propagate_dense(&run.traj, &run.mesh, &p, 400);
    assert!(dense.worst_clearance() < 0.0, "{:?}", dense.min_clearance);
}

#[test]
fn table1_refined_run_is_clear() {
    let p = ProblemDef::table1();
    let m = Mesh::uniform(10);
    let (run, passes) = run_algorithm2(&p, m.clone(), p.linear_guess(&m), &ScpOptions::default()).unwrap();
    assert!(run.converged);
    assert!(run.history.len() <= 25, "{}", run.history.len());
    assert!((15..=60).contains(&run.mesh.len()), "{}", run.mesh.len());
    assert_eq!(passes.len(), run.history.len());
    assert!(passes.last().unwrap().intervals_split.is_empty());
    let dense = propagate_dense(&run.traj, &run.mesh, &p, 400);
    assert!(dense.worst_clearance() >= 0.0, "{:?}", dense.min_clearance);
    // converged iterates satisfy the trapezoid rule to the convergence tolerance
    let d = trapezoid_defects(&run.traj, &run.mesh, |z, u| p.dynamics(z, u)).unwrap();
    assert!(d.iter().all(|v| v[0].abs() < 1.0 && v[1].abs() < 1.0 && v[2].abs() < 1e-3));
    assert!((p.start[0] - run.traj.states[0][0]).abs() < 1e-6);
    let last = run.traj.states.last().unwrap();
    assert!((last[0] - p.goal[0]).abs() < 1e-6 && (last[1] - p.goal[1]).abs() < 1e-6);
}

#[test]
fn table1_outer_loop_terminates() {
    let p = ProblemDef::table1();
    let m = Mesh::uniform(10);
    let (run, loops) = run_algorithm1(&p, m.clone(), p.linear_guess(&m), &ScpOptions::default(), 20).unwrap();
    assert!(loops.last().unwrap().splits.is_empty());
    assert!(loops.len() >= 2);
    assert!(run.mesh.len() > m.len());
    let dense = propagate_dense(&run.traj, &run.mesh, &p, 400);
    eprintln!("outer loops {:?}, clearance {:?}", loops.iter().map(|l| (l.scp_iterations, l.mesh_size)).collect::<Vec<_>>(), dense.min_clearance);
    assert!(dense.worst_clearance() >= 0.0);
}
