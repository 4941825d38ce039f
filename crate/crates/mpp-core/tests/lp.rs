use mpp_core::lp::{solve, LinearProgram, LpStatus};

#[test]
fn textbook_maximum() {
    // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36.
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![3.0, 5.0];
    lp.add_le(vec![1.0, 0.0], 4.0);
    lp.add_le(vec![0.0, 2.0], 12.0);
    lp.add_le(vec![3.0, 2.0], 18.0);
    let s = solve(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective - 36.0).abs() < 1e-9);
    assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
}

#[test]
fn equalities_with_free_direction_bounded_by_sign() {
    // max -x - y subject to x - y = 1 → x = 1, y = 0.
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![-1.0, -1.0];
    lp.add_eq(vec![1.0, -1.0], 1.0);
    let s = solve(&lp).unwrap();
    assert!((s.objective + 1.0).abs() < 1e-9);
    assert!(lp.max_violation(&s.x) < 1e-9);
}

#[test]
fn statuses() {
    let mut lp = LinearProgram::new(1);
    lp.objective = vec![1.0];
    lp.add_ge(vec![1.0], 2.0);
    assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    lp.add_le(vec![1.0], 1.0);
    assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn dimension_mismatch_is_reported() {
    let mut lp = LinearProgram::new(2);
    lp.eq_rows.push(vec![1.0]);
    lp.eq_rhs.push(1.0);
    assert!(solve(&lp).is_err());
}

#[test]
fn transportation_problem() {
    // Two sources (supply 20, 30), three sinks (demand 10, 25, 15).
    let cost = [[8.0, 6.0, 10.0], [9.0, 12.0, 13.0]];
    let mut lp = LinearProgram::new(6);
    lp.objective = cost.iter().flatten().map(|c| -c).collect();
    for (i, s) in [20.0, 30.0].iter().enumerate() {
        let mut row = vec![0.0; 6];
        row[i * 3..i * 3 + 3].iter_mut().for_each(|v| *v = 1.0);
        lp.add_eq(row, *s);
    }
    for (j, d) in [10.0, 25.0, 15.0].iter().enumerate() {
        let mut row = vec![0.0; 6];
        row[j] = 1.0;
        row[3 + j] = 1.0;
        lp.add_eq(row, *d);
    }
    let s = solve(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    // Optimal plan: source 0 sends 20 to sink 1; source 1 sends 10, 5, 15.
    assert!((s.objective + (20.0 * 6.0 + 10.0 * 9.0 + 5.0 * 12.0 + 15.0 * 13.0)).abs() < 1e-9, "{}", s.objective);
}
