use onlinegamma2::transforms::zones::{BoundedStep, ZonePipeline};
use onlinegamma2::transforms::AvgEngineFactory;

fn main() {
    let n = 16;
    // Rows sharing mass on column 0: q_t = s·(e0 + e_t)/sqrt(2); col-0 entry
    // s/sqrt(2) must stay under sqrt(3)*gamma for the next zone to hold it.
    for &s in &[1.6f64, 1.8, 2.0, 2.2, 2.4] {
        let gamma = 1.0;
        let mut p = ZonePipeline::new(AvgEngineFactory { gamma }, n).unwrap();
        let mut outcome = String::new();
        'run: for rep in 0..4 {
            for t in 1..n {
                let mut q = vec![0.0; n];
                q[0] = s / 2f64.sqrt();
                q[t] = s / 2f64.sqrt();
                match p.step(&q) {
                    Ok(BoundedStep::Extended { .. }) => {}
                    Ok(BoundedStep::Asserted { .. }) => { outcome = format!("asserted rep={rep} t={t}"); break 'run; }
                    Err(e) => { outcome = format!("ERR {e}"); break 'run; }
                }
            }
        }
        println!("s={s}: kicks={} {} ins={:?}", p.kick_log().len(), outcome, p.zone_ins_sizes());
        if let Some(k) = p.kick_log().first() { println!("   first kick: step={} zone={} col={}", k.step, k.zone, k.column); }
    }
}
