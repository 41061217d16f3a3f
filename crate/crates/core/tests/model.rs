use fabricmigrate_core::model::{slot_layout, FieldType, FieldValue, Message, MessageType, Primitive, Scalar};
use proptest::prelude::*;

const PRIMITIVES: [(Primitive, usize); 11] = [
    (Primitive::Bool, 1),
    (Primitive::U8, 1),
    (Primitive::I8, 1),
    (Primitive::U16, 2),
    (Primitive::I16, 2),
    (Primitive::U32, 4),
    (Primitive::I32, 4),
    (Primitive::U64, 8),
    (Primitive::I64, 8),
    (Primitive::F32, 4),
    (Primitive::F64, 8),
];

fn field_type() -> impl Strategy<Value = (FieldType, usize)> {
    (0..PRIMITIVES.len(), prop::option::of(1usize..5)).prop_map(|(i, n)| {
        let (p, size) = PRIMITIVES[i];
        match n {
            None => (FieldType::Scalar(p), size),
            Some(n) => (FieldType::Array(p, n), size * n),
        }
    })
}

/// A message type plus the byte size of each field, counted independently.
fn message_type() -> impl Strategy<Value = (MessageType, Vec<usize>)> {
    prop::collection::vec(field_type(), 1..8).prop_map(|fields| {
        let sizes = fields.iter().map(|(_, s)| *s).collect();
        let fields = fields
            .into_iter()
            .enumerate()
            .map(|(i, (t, _))| (format!("f{i}"), t))
            .collect();
        (MessageType::new("T", fields).unwrap(), sizes)
    })
}

fn canonical_bool(p: Primitive, b: u8) -> u8 {
    if p == Primitive::Bool {
        b & 1
    } else {
        b
    }
}

proptest! {
    #[test]
    fn layout_matches_byte_count((ty, sizes) in message_type()) {
        let layout = slot_layout("t", &ty);
        let mut offset = 0;
        for (i, size) in sizes.iter().enumerate() {
            prop_assert_eq!(layout.field_offsets[&format!("f{i}")], offset);
            offset += size;
        }
        prop_assert_eq!(layout.size_words, offset.div_ceil(4));
        prop_assert_eq!(ty.encoded_size(), offset);
    }

    #[test]
    fn bytes_roundtrip_through_message((ty, _) in message_type(), seed in prop::collection::vec(any::<u8>(), 64..=64)) {
        // Random bytes, with bool fields restricted to their canonical encoding.
        let layout = slot_layout("t", &ty);
        let mut bytes: Vec<u8> = (0..ty.encoded_size()).map(|i| seed[i % seed.len()].wrapping_add(i as u8)).collect();
        for (name, ft) in ty.fields() {
            let p = ft.primitive();
            let n = match ft { FieldType::Scalar(_) => 1, FieldType::Array(_, n) => *n };
            let at = layout.field_offsets[name];
            for k in 0..n {
                let i = at + k * p.size_bytes();
                bytes[i] = canonical_bool(p, bytes[i]);
            }
        }
        let msg = Message::decode(&ty, &bytes).unwrap();
        prop_assert_eq!(msg.encode(&ty).unwrap(), bytes);
        let words = msg.to_words(&ty).unwrap();
        prop_assert_eq!(words.len(), layout.size_words);
        prop_assert!(Message::from_words(&ty, &words).unwrap().bits_eq(&msg));
    }

    #[test]
    fn f64_fields_land_at_layout_offsets(values in prop::collection::vec(any::<f64>(), 1..6), lead in 0usize..4) {
        let mut fields: Vec<(String, FieldType)> = (0..lead).map(|i| (format!("pad{i}"), FieldType::Scalar(Primitive::U8))).collect();
        fields.extend((0..values.len()).map(|i| (format!("v{i}"), FieldType::Scalar(Primitive::F64))));
        let ty = MessageType::new("T", fields).unwrap();
        let mut msg = Message::zeroed(&ty);
        for (i, v) in values.iter().enumerate() {
            msg.set(&format!("v{i}"), FieldValue::Scalar(Scalar::F64(*v))).unwrap();
        }
        let bytes = msg.encode(&ty).unwrap();
        let layout = slot_layout("t", &ty);
        for (i, v) in values.iter().enumerate() {
            let at = layout.field_offsets[&format!("v{i}")];
            prop_assert_eq!(&bytes[at..at + 8], &v.to_le_bytes());
        }
    }
}

#[test]
fn nan_payloads_survive_the_slot() {
    let ty = MessageType::new("T", vec![("x".into(), FieldType::Scalar(Primitive::F32))]).unwrap();
    let mut msg = Message::zeroed(&ty);
    let nan = f32::from_bits(0x7FC0_1234);
    msg.set("x", FieldValue::Scalar(Scalar::F32(nan))).unwrap();
    let back = Message::from_words(&ty, &msg.to_words(&ty).unwrap()).unwrap();
    assert!(back.bits_eq(&msg));
    assert_eq!(msg.to_words(&ty).unwrap(), vec![0x7FC0_1234]);
}
