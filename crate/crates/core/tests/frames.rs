use std::collections::BTreeMap;

use launchgraph_core::frame::{decode_frame, encode_frame, Envelope, FrameError};
use launchgraph_core::ArgValue;
use proptest::prelude::*;

fn call(id: u64, method: &str, args: Vec<ArgValue>) -> Envelope {
    Envelope::Call {
        id,
        method: method.into(),
        args,
    }
}

fn result(id: u64, value: ArgValue) -> Envelope {
    Envelope::Result { id, value }
}

/// (envelope, big-endian length header, JSON body). Lengths were counted
/// by hand from the body text, independently of the encoder.
fn golden() -> Vec<(Envelope, [u8; 4], &'static str)> {
    let mut map = BTreeMap::new();
    map.insert("b".to_string(), ArgValue::Seq(vec![false.into(), ArgValue::Null]));
    map.insert("a".to_string(), true.into());
    vec![
        (
            call(1, "get_size", vec![]),
            [0, 0, 0, 0x34],
            r#"{"args":[],"id":1,"kind":"call","method":"get_size"}"#,
        ),
        (
            result(0, ArgValue::Null),
            [0, 0, 0, 0x25],
            r#"{"id":0,"kind":"result","value":null}"#,
        ),
        (
            call(2, "produce", vec![]),
            [0, 0, 0, 0x33],
            r#"{"args":[],"id":2,"kind":"call","method":"produce"}"#,
        ),
        (
            result(2, 7.into()),
            [0, 0, 0, 0x22],
            r#"{"id":2,"kind":"result","value":7}"#,
        ),
        (
            call(3, "reduce", vec!["the".into(), 1.into()]),
            [0, 0, 0, 0x39],
            r#"{"args":["the",1],"id":3,"kind":"call","method":"reduce"}"#,
        ),
        (
            Envelope::Error {
                id: 4,
                message: "no such method: nope".into(),
            },
            [0, 0, 0, 0x38],
            r#"{"id":4,"kind":"error","message":"no such method: nope"}"#,
        ),
        (
            call(5, "evaluate", vec![vec![1.0, -0.5, 0.25, 1e-7].into()]),
            [0, 0, 0, 0x48],
            r#"{"args":[[1.0,-0.5,0.25,1e-7]],"id":5,"kind":"call","method":"evaluate"}"#,
        ),
        (
            result(5, (-1.3125).into()),
            [0, 0, 0, 0x28],
            r#"{"id":5,"kind":"result","value":-1.3125}"#,
        ),
        (
            result(u64::MAX, ArgValue::Map(map)),
            [0, 0, 0, 0x4f],
            r#"{"id":18446744073709551615,"kind":"result","value":{"a":true,"b":[false,null]}}"#,
        ),
        (
            result(6, "line\nbreak \"q\" \\ \u{1}".into()),
            [0, 0, 0, 0x3e],
            r#"{"id":6,"kind":"result","value":"line\nbreak \"q\" \\ \u0001"}"#,
        ),
        (
            result(7, "héllo ☃".into()),
            [0, 0, 0, 0x2d],
            r#"{"id":7,"kind":"result","value":"héllo ☃"}"#,
        ),
        (
            result(8, i64::MIN.into()),
            [0, 0, 0, 0x35],
            r#"{"id":8,"kind":"result","value":-9223372036854775808}"#,
        ),
        (
            result(9, 1e20.into()),
            [0, 0, 0, 0x25],
            r#"{"id":9,"kind":"result","value":1e20}"#,
        ),
    ]
}

#[test]
fn golden_vectors_encode_exactly() {
    for (env, header, body) in golden() {
        let frame = encode_frame(&env).unwrap();
        assert_eq!(&frame[..4], &header, "header for {body}");
        assert_eq!(std::str::from_utf8(&frame[4..]).unwrap(), body);
    }
}

#[test]
fn golden_vectors_decode_exactly() {
    for (env, header, body) in golden() {
        let mut frame = header.to_vec();
        frame.extend_from_slice(body.as_bytes());
        let (back, used) = decode_frame(&frame).unwrap();
        assert_eq!(back, env);
        assert_eq!(used, frame.len());
    }
}

#[test]
fn decode_rejects_bad_payloads() {
    for body in [
        &br#"{"kind":"bogus"}"#[..],
        br#"{"id":1,"kind":"bogus"}"#,
        br#"not json"#,
        br#"{"id":1,"kind":"call","method":"","args":[]}"#,
        br#"{"id":1,"kind":"call","method":"m"}"#,
        br#"{"id":-1,"kind":"result","value":1}"#,
        br#"{"id":1,"kind":"result","value":{"__handle__":3}}"#,
        br#"{"extra":0,"id":1,"kind":"result","value":1}"#,
    ] {
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(body);
        assert!(
            matches!(decode_frame(&frame), Err(FrameError::Protocol(_) | FrameError::Value(_))),
            "{}",
            String::from_utf8_lossy(body)
        );
    }
}

#[test]
fn handles_never_encode_on_wire() {
    let e = result(1, ArgValue::Handle(launchgraph_core::PlaceholderId(0)));
    assert!(matches!(encode_frame(&e), Err(FrameError::Value(_))));
}

fn arg_value() -> impl Strategy<Value = ArgValue> {
    let leaf = prop_oneof![
        Just(ArgValue::Null),
        any::<bool>().prop_map(ArgValue::Bool),
        any::<i64>().prop_map(ArgValue::Int),
        any::<f64>()
            .prop_filter("finite", |x| x.is_finite())
            .prop_map(ArgValue::Float),
        ".{0,12}".prop_map(ArgValue::Str),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(ArgValue::Seq),
            prop::collection::btree_map(".{0,6}", inner, 0..6)
                .prop_filter("no handle marker", |m| !m.contains_key("__handle__"))
                .prop_map(ArgValue::Map),
        ]
    })
}

fn envelope() -> impl Strategy<Value = Envelope> {
    prop_oneof![
        (any::<u64>(), "[a-z_]{1,12}", prop::collection::vec(arg_value(), 0..4))
            .prop_map(|(id, method, args)| Envelope::Call { id, method, args }),
        (any::<u64>(), arg_value()).prop_map(|(id, value)| Envelope::Result { id, value }),
        (any::<u64>(), ".{0,24}").prop_map(|(id, message)| Envelope::Error { id, message }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip(e in envelope()) {
        let frame = encode_frame(&e).unwrap();
        let (back, used) = decode_frame(&frame).unwrap();
        prop_assert_eq!(used, frame.len());
        prop_assert_eq!(&back, &e);
        // canonical: re-encoding the decoded envelope is byte-identical
        prop_assert_eq!(encode_frame(&back).unwrap(), frame);
    }
}
