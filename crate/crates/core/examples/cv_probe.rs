use motionflow::energy::*;
use motionflow::stimuli::*;

fn main() {
    let bank = EnergyBank::<f64>::fixed_design();
    // Perfectly matched probe for level-0 units tuned (0.08, 0.08), theta=0.
    let spec = MotionSpec::new((1.0, 0.0), 0.0, 0.08, 1.0);
    let seq = drifting_grating(&spec, 12, 128, 128, Waveform::Sine).unwrap();
    let map = stage1_forward(&seq, &bank).unwrap();
    let (mh, mw, nc) = map.dims();
    let m = 4;
    let mut literal_ok = true;
    for c in 0..nc {
        let mut vals = Vec::new();
        for y in m..mh - m { for x in m..mw - m { vals.push(map.data[(y, x, c)]); } }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean <= 0.0 { continue; }
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        if var >= 0.01 * mean { literal_ok = false; println!("ch {c} literal fail: var {var:.3e} mean {mean:.3e}"); }
        if c == 0 {
            println!("matched ch0: mean {mean:.4e} cv {:.4}", var.sqrt() / mean);
        }
    }
    println!("literal var<1% of mean for all channels: {literal_ok}");
}
