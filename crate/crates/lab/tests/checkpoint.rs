mod common;

use trajlab::checkpoint::{Checkpoint, MAGIC, VERSION};
use trajlab::harness::Lab;
use trajlab::LabError;
use trajlab_core::model::Family;

fn pretrained(family: Family) -> Checkpoint {
    let mut cfg = common::tiny_config(family);
    cfg.epochs = 1;
    Lab::new(cfg).unwrap().pretrain().unwrap()
}

#[test]
fn round_trip_is_bit_exact() {
    let ck = pretrained(Family::Dm);
    let bytes = ck.to_bytes().unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    for (a, b) in ck.params.iter().zip(back.params.iter()) {
        assert_eq!(a.0, b.0);
        assert!(a.1.data().iter().zip(b.1.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn manifest_carries_the_family_tag() {
    let ck = pretrained(Family::Dm);
    let bytes = ck.to_bytes().unwrap();
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let manifest = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
    assert!(manifest.contains(r#""family":"DM""#), "{manifest}");
    assert_eq!(ck.manifest.adam_step, ck.adam.as_ref().map(|a| a.step));
    assert_eq!(ck.manifest.parent, None);
}

#[test]
fn save_and_load_report_the_content_hash() {
    let ck = pretrained(Family::Fm);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fm.tgl");
    let hash = ck.save(&path).unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(hash, ck.content_hash().unwrap());
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
}

#[test]
fn corrupt_headers_are_rejected() {
    let bytes = pretrained(Family::Dm).to_bytes().unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(LabError::BadMagic)));

    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(LabError::UnsupportedVersion(v)) if v == VERSION + 1));

    for cut in [6, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(LabError::TruncatedPayload)), "cut at {cut}");
    }

    let mut long = bytes.clone();
    long.push(0);
    assert!(Checkpoint::from_bytes(&long).is_err());
}

#[test]
fn latent_checkpoint_embeds_its_autoencoder() {
    let ck = pretrained(Family::Ldm);
    let vae = ck.vae.as_deref().expect("embedded autoencoder");
    assert_eq!(vae.manifest.family, Family::Tcvae);
    assert_eq!(ck.manifest.vae_hash.as_deref(), Some(vae.content_hash().unwrap().as_str()));

    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.manifest.vae_hash.as_deref(), Some(vae.content_hash().unwrap().as_str()));
    assert_eq!(back.vae.as_deref(), Some(vae));
    assert!(back.manifest.latent_scaler.is_some());
}
