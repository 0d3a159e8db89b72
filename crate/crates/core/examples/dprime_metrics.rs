//! The scalar metrics: AUC, EER, equivalent d', Kendall tau-b and the
//! paired t-test.

use embdistill::metrics::{average_d_prime, d_prime, equal_error_rate, kendall_tau, paired_t_test, roc_auc};

fn main() -> embdistill::Result<()> {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.7, 0.2];
    let labels = [false, false, true, true, true, false];
    let auc = roc_auc(&scores, &labels)?;
    println!("auc {auc:.4}  eer {:.4}  d' {:.4}", equal_error_rate(&scores, &labels)?, d_prime(auc));

    for auc in [0.5, 0.6, 0.7602499, 0.9, 0.99] {
        println!("d'({auc}) = {:+.5}", d_prime(auc));
    }
    println!("average d' over [0.8, 0.9, 0.95] = {:.4}", average_d_prime(&[0.8, 0.9, 0.95])?);

    let sizes = [1.0, 2.0, 3.0, 4.0, 5.0];
    let scores = [0.61, 0.64, 0.63, 0.70, 0.72];
    println!("kendall tau-b(size, score) = {:.3}", kendall_tau(&sizes, &scores)?);

    let t = paired_t_test(&[1.0, -1.0, 2.0, 0.0], &[0.0; 4])?;
    println!("paired t on [1, -1, 2, 0]: t = {:.4}, p = {:.4}", t.t_statistic, t.p_value);
    Ok(())
}
