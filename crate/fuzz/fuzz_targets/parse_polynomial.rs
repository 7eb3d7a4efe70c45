#![no_main]

use cvkvn::PhasePolynomial;
use libfuzzer_sys::fuzz_target;

// First byte picks the variable count; the rest is the polynomial text.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let num_vars = 1 + usize::from(n % 8);
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    if let Ok(p) = PhasePolynomial::parse(text, num_vars) {
        let printed = p.to_string();
        let again = PhasePolynomial::parse(&printed, num_vars).expect("printed polynomial must parse");
        assert_eq!(p, again, "round trip changed {printed:?}");
    }
});
