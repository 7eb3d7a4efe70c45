#![no_main]

use cvkvn::synth::GateSequence;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(seq) = GateSequence::parse(text) {
        let printed = seq.to_string();
        let again = GateSequence::parse(&printed).expect("printed listing must parse");
        assert_eq!(seq, again);
        let _ = seq.inverse();
    }
});
