use renorm_perc::bounds::*;
fn main() {
    let p = BoundParams::new(0.99, 0.01, 3.0, 0.7, 1.0 / 6.0, 10_000).unwrap();
    for l in [10_000u64, 10_000_000, 1_000_000_000, 100_000_000_000, 10_000_000_000_000] {
        let r = check_claims(&p.with_l(l), 50, &[l]).unwrap();
        println!("L={l} N={} J={:.3} JThk={:.3} f1={} f1h={} f2={} f3={} first2={:?}", r.n, r.j, r.j_theta_kappa, r.all_final1, r.all_final1_hat, r.all_final2, r.all_final3, r.final2_first_failure);
        let x = &r.rows[48];
        println!("  m=50 f1lhs={:.3e} lnq={:.3e} ln1mpmm={:.3e} f3={:.3e}", x.final1_lhs, x.ln_q_m, x.ln_one_minus_p_mm, x.final3_bound);
    }
}
