use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wastive_core::protocol::*;

mod common;
use common::crc_oracle;

#[test]
fn check_value() {
    assert_eq!(crc_oracle(b"123456789"), 0xF4);
    assert_eq!(crc8(b"123456789"), crc_oracle(b"123456789"));
    assert_eq!(crc8(&[]), 0x00);
}

#[test]
fn encode_examples() {
    let hb = encode(MsgType::Heartbeat, 0, &[]).unwrap();
    assert_eq!(hb, vec![0xAA, 0x02, 0x00, 0x00, crc_oracle(&[0x02, 0x00, 0x00])]);

    let body = [0x01, 0x01, 0x04, 0xDC, 0x05, 0xDC, 0x05];
    let mut expected = vec![0xAA];
    expected.extend(body);
    expected.push(crc_oracle(&body));
    assert_eq!(encode(MsgType::SetTargets, 1, &body[3..]).unwrap(), expected);
    assert_eq!(DeviceFrame::set_targets(1, &[1500, 1500]).unwrap().to_bytes(), expected);
}

#[test]
fn every_single_byte_flip_is_rejected_and_recovered() {
    let victim = DeviceFrame::set_targets(5, &[1000, 1500, 2000, 1234]).unwrap();
    let follower = DeviceFrame::set_targets(6, &[1100, 1200, 1300, 1400]).unwrap();
    // Enough later traffic to outlast the longest length a corrupted header can claim.
    let traffic: Vec<u8> = (0..4)
        .flat_map(|s| DeviceFrame::set_targets(7 + s, &[1500; 8]).unwrap().to_bytes())
        .collect();
    let clean = victim.to_bytes();
    let mut bogus = 0;
    for pos in 0..clean.len() {
        for flip in 1..=255u8 {
            let mut damaged = clean.clone();
            damaged[pos] ^= flip;

            let mut stream = damaged.clone();
            stream.extend(follower.to_bytes());
            stream.extend(&traffic);
            let out = decode(&stream);
            assert!(!out.messages.contains(&victim), "pos {pos} flip {flip:#04x}");
            assert!(out.messages.contains(&follower), "pos {pos} flip {flip:#04x}");
            assert_eq!(out.consumed, stream.len());
            bogus += out.messages.len() - 5;

            // Same damage at the very end of a stream: flushing recovers it.
            let mut dec = Decoder::new();
            let mut got = dec.push(&damaged);
            got.extend(dec.push(&follower.to_bytes()));
            got.extend(dec.flush());
            assert!(got.contains(&follower), "flush: pos {pos} flip {flip:#04x}");
        }
    }
    assert_eq!(bogus, 0);
}

fn message() -> impl Strategy<Value = DeviceFrame> {
    prop_oneof![
        (any::<u8>(), prop::collection::vec(any::<u16>(), 0..=MAX_CHANNELS))
            .prop_map(|(seq, p)| DeviceFrame::set_targets(seq, &p).unwrap()),
        (
            any::<u8>(),
            prop::option::of(any::<u8>()),
            prop::sample::select(vec![MsgType::Heartbeat, MsgType::Ack, MsgType::FailsafeTriggered])
        )
            .prop_map(|(seq, echo, t)| DeviceFrame::new(t, seq, echo.into_iter().collect()).unwrap()),
    ]
}

proptest! {
    #[test]
    fn crc_matches_oracle(data in prop::collection::vec(any::<u8>(), 0..80)) {
        prop_assert_eq!(crc8(&data), crc_oracle(&data));
        let mut with = data.clone();
        with.push(crc8(&data));
        prop_assert_eq!(crc8(&with), 0);
    }

    #[test]
    fn stream_round_trip(msgs in prop::collection::vec(message(), 0..20)) {
        let stream: Vec<u8> = msgs.iter().flat_map(|m| m.to_bytes()).collect();
        let out = decode(&stream);
        prop_assert_eq!(out.messages, msgs);
        prop_assert_eq!(out.consumed, stream.len());
        prop_assert_eq!(out.errors_skipped, 0);
    }

    #[test]
    fn arbitrary_chunking_is_transparent(msgs in prop::collection::vec(message(), 1..10), cuts in prop::collection::vec(1usize..12, 1..50)) {
        let stream: Vec<u8> = msgs.iter().flat_map(|m| m.to_bytes()).collect();
        let mut dec = Decoder::new();
        let mut got = Vec::new();
        let mut pos = 0;
        for c in cuts.iter().cycle() {
            if pos >= stream.len() { break; }
            let end = (pos + c).min(stream.len());
            got.extend(dec.push(&stream[pos..end]));
            pos = end;
        }
        prop_assert_eq!(got, msgs);
    }

    #[test]
    fn garbage_never_panics(stream in prop::collection::vec(any::<u8>(), 0..300)) {
        let out = decode(&stream);
        prop_assert!(out.consumed <= stream.len());
        prop_assert!(stream.len() - out.consumed < FRAME_OVERHEAD + MAX_PAYLOAD);
        for m in &out.messages {
            let bytes = m.to_bytes();
            prop_assert_eq!(crc8(&bytes[1..bytes.len() - 1]), bytes[bytes.len() - 1]);
        }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Targets(Vec<u16>, u8),
    Heartbeat(u8),
    Corrupt(Vec<u16>),
    Silence,
}

/// Event-level model of the device: it knows which frames are valid by
/// construction and never decodes bytes.
struct DeviceOracle {
    pulses: Vec<u16>,
    rest: Vec<u16>,
    last_valid: u64,
    engaged: bool,
    acks: Vec<u8>,
    failsafes: usize,
}

impl DeviceOracle {
    fn apply(&mut self, ev: &Event, now: u64) {
        match ev {
            Event::Targets(p, seq) => {
                self.pulses = p.clone();
                self.last_valid = now;
                self.engaged = false;
                self.acks.push(*seq);
            }
            Event::Heartbeat(_) => {
                self.last_valid = now;
                self.engaged = false;
            }
            Event::Corrupt(_) | Event::Silence => {}
        }
        if !self.engaged && now - self.last_valid > 500 {
            self.engaged = true;
            self.failsafes += 1;
            self.pulses = self.rest.clone();
        }
    }
}

fn bytes_for(ev: &Event, rng: &mut ChaCha8Rng) -> Vec<u8> {
    match ev {
        Event::Targets(p, seq) => DeviceFrame::set_targets(*seq, p).unwrap().to_bytes(),
        Event::Heartbeat(seq) => DeviceFrame::heartbeat(*seq).to_bytes(),
        Event::Corrupt(p) => {
            let mut b = DeviceFrame::set_targets(0, p).unwrap().to_bytes();
            // Damage a byte after the sync so the frame cannot pass its CRC.
            let i = rng.gen_range(1..b.len());
            b[i] ^= rng.gen_range(1..=255u8);
            b
        }
        Event::Silence => Vec::new(),
    }
}

#[test]
fn device_matches_event_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD3_71CE);
    for _ in 0..200 {
        let channels = rng.gen_range(1..=8);
        let rest = vec![1000u16; channels];
        let mut dev = DeviceModel::new(rest.clone(), 500, 0);
        let mut oracle = DeviceOracle {
            pulses: rest.clone(),
            rest: rest.clone(),
            last_valid: 0,
            engaged: false,
            acks: Vec::new(),
            failsafes: 0,
        };
        let mut now = 0u64;
        let mut received = Vec::new();
        let mut seen_pulses = vec![rest.clone()];
        for _ in 0..300 {
            // Frames arrive whole and further apart than the inter-byte timeout.
            now += rng.gen_range(INTERBYTE_TIMEOUT_MS + 1..200);
            let pulses: Vec<u16> = (0..channels).map(|_| rng.gen_range(500..=2500)).collect();
            let ev = match rng.gen_range(0..10) {
                0..=3 => Event::Targets(pulses, rng.gen()),
                4 => Event::Heartbeat(rng.gen()),
                5..=6 => Event::Corrupt(pulses),
                _ => Event::Silence,
            };
            let bytes = bytes_for(&ev, &mut rng);
            received.extend(dev.step(&bytes, now));
            oracle.apply(&ev, now);
            if let Event::Targets(p, _) = &ev {
                seen_pulses.push(p.clone());
            }
            assert_eq!(dev.current_pulses(), oracle.pulses.as_slice());
            assert_eq!(dev.failsafe_engaged(), oracle.engaged);
            assert!(seen_pulses.iter().any(|p| p == dev.current_pulses()));
            if dev.failsafe_engaged() {
                assert_eq!(dev.current_pulses(), dev.rest_pulses());
            }
        }
        let replies = decode(&received).messages;
        let acks: Vec<u8> = replies
            .iter()
            .filter(|m| m.msg_type == MsgType::Ack)
            .map(|m| m.echo_seq().unwrap())
            .collect();
        let failsafes = replies
            .iter()
            .filter(|m| m.msg_type == MsgType::FailsafeTriggered)
            .count();
        assert_eq!(acks, oracle.acks);
        assert_eq!(failsafes, oracle.failsafes);
        assert_eq!(dev.failsafe_count() as usize, oracle.failsafes);
    }
}
