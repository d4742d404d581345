#![no_main]

use libfuzzer_sys::fuzz_target;

// Network section only: the validator must reject or accept without
// panicking, and accepted networks must evaluate rates finitely on their
// validation box.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = toml::from_str::<multiscale::network::NetworkSpec>(text) else {
        return;
    };
    if !(spec.u_max.is_finite() && spec.u_max > 0.0) || spec.d_max == 0 || spec.d_max > 64 {
        return;
    }
    if let Ok(net) = multiscale::network::validate_network(&spec) {
        for (id, r) in net.fast_c.iter().chain(&net.fast_mixed) {
            for i in 0..8 {
                let y1 = spec.u_max * i as f64 / 8.0;
                let _ = multiscale::network::eval_rate(*id, r, y1, 0.0, net.truncation.as_ref());
            }
        }
    }
});
