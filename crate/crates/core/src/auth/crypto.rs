//! Secret codes and their encryption at rest (ChaCha20-Poly1305).

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const KEY_LEN: usize = 32;
pub const CODE_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("ciphertext failed authentication")]
    AuthenticationFailed,
    #[error("key must be {KEY_LEN} bytes, got {0}")]
    BadKeyLength(usize),
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("invalid hex: {0}")]
    BadHex(String),
    #[error("system random source failed: {0}")]
    Random(String),
}

fn random_bytes<const N: usize>() -> Result<[u8; N], CryptoError> {
    let mut buf = [0u8; N];
    getrandom::fill(&mut buf).map_err(|e| CryptoError::Random(e.to_string()))?;
    Ok(buf)
}

/// The service-wide encryption key.
#[derive(Clone)]
pub struct MasterKey([u8; KEY_LEN]);

impl std::fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

impl MasterKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(text.trim()).map_err(|e| CryptoError::BadHex(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    /// Reads a hex key from the named environment variable.
    pub fn from_env(var: &str) -> Result<Self, CryptoError> {
        let text = std::env::var(var).map_err(|_| CryptoError::MissingKey(var.to_string()))?;
        Self::from_hex(&text)
    }

    pub fn generate() -> Result<Self, CryptoError> {
        Ok(Self(random_bytes()?))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// A user's 32-byte secret, shown to clients as 64 lowercase hex characters.
#[derive(Clone)]
pub struct SecretCode([u8; CODE_LEN]);

impl std::fmt::Debug for SecretCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretCode(..)")
    }
}

impl PartialEq for SecretCode {
    fn eq(&self, other: &Self) -> bool {
        self.ct_eq(other)
    }
}

impl Eq for SecretCode {}

impl SecretCode {
    pub fn generate() -> Result<Self, CryptoError> {
        Ok(Self(random_bytes()?))
    }

    pub fn from_bytes(bytes: [u8; CODE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(text).map_err(|e| CryptoError::BadHex(e.to_string()))?;
        let arr: [u8; CODE_LEN] = bytes
            .as_slice()
            .try_into()
            .map_err(|_| CryptoError::BadHex(format!("expected {CODE_LEN} bytes, got {}", bytes.len())))?;
        Ok(Self(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; CODE_LEN] {
        &self.0
    }

    /// Constant-time equality.
    pub fn ct_eq(&self, other: &SecretCode) -> bool {
        self.0.ct_eq(&other.0).into()
    }
}

/// Ciphertext (with tag) and its nonce, stored as hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedCode {
    #[serde(with = "hex::serde")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "hex::serde")]
    pub ciphertext: Vec<u8>,
}

/// Encrypts `code` under a fresh random nonce. `context` (the user's email)
/// is authenticated but not encrypted, so a record's ciphertext cannot be
/// moved to another account.
pub fn encrypt_code(code: &SecretCode, key: &MasterKey, context: &[u8]) -> Result<EncryptedCode, CryptoError> {
    let cipher = ChaCha20Poly1305::new(&Key::from(key.0));
    let nonce: [u8; NONCE_LEN] = random_bytes()?;
    let ciphertext = cipher
        .encrypt(
            &Nonce::from(nonce),
            Payload {
                msg: &code.0,
                aad: context,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    Ok(EncryptedCode { nonce, ciphertext })
}

pub fn decrypt_code(sealed: &EncryptedCode, key: &MasterKey, context: &[u8]) -> Result<SecretCode, CryptoError> {
    let cipher = ChaCha20Poly1305::new(&Key::from(key.0));
    let plain = cipher
        .decrypt(
            &Nonce::from(sealed.nonce),
            Payload {
                msg: &sealed.ciphertext,
                aad: context,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    let arr: [u8; CODE_LEN] = plain
        .as_slice()
        .try_into()
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    Ok(SecretCode(arr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> MasterKey {
        MasterKey::from_bytes(&[7u8; 32]).unwrap()
    }

    #[test]
    fn round_trip() {
        let code = SecretCode::generate().unwrap();
        let sealed = encrypt_code(&code, &key(), b"a@x").unwrap();
        assert_eq!(decrypt_code(&sealed, &key(), b"a@x").unwrap(), code);
        assert_eq!(sealed.ciphertext.len(), CODE_LEN + 16);
    }

    #[test]
    fn every_flipped_bit_fails() {
        let code = SecretCode::from_bytes([1u8; 32]);
        let sealed = encrypt_code(&code, &key(), b"a@x").unwrap();
        for byte in 0..sealed.ciphertext.len() {
            for bit in 0..8 {
                let mut bad = sealed.clone();
                bad.ciphertext[byte] ^= 1 << bit;
                assert_eq!(decrypt_code(&bad, &key(), b"a@x"), Err(CryptoError::AuthenticationFailed));
            }
        }
        for byte in 0..NONCE_LEN {
            let mut bad = sealed.clone();
            bad.nonce[byte] ^= 0x80;
            assert_eq!(decrypt_code(&bad, &key(), b"a@x"), Err(CryptoError::AuthenticationFailed));
        }
    }

    #[test]
    fn wrong_context_or_key_fails() {
        let code = SecretCode::generate().unwrap();
        let sealed = encrypt_code(&code, &key(), b"a@x").unwrap();
        assert!(decrypt_code(&sealed, &key(), b"b@x").is_err());
        let other = MasterKey::from_bytes(&[8u8; 32]).unwrap();
        assert!(decrypt_code(&sealed, &other, b"a@x").is_err());
    }

    #[test]
    fn fresh_nonce_per_encryption() {
        let code = SecretCode::from_bytes([9u8; 32]);
        let a = encrypt_code(&code, &key(), b"").unwrap();
        let b = encrypt_code(&code, &key(), b"").unwrap();
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn key_length_is_checked() {
        assert_eq!(MasterKey::from_bytes(&[0u8; 31]).unwrap_err(), CryptoError::BadKeyLength(31));
        assert_eq!(MasterKey::from_hex(&"ab".repeat(33)).unwrap_err(), CryptoError::BadKeyLength(33));
        assert!(MasterKey::from_hex("zz").is_err());
        let k = MasterKey::generate().unwrap();
        assert_eq!(MasterKey::from_hex(&k.to_hex()).unwrap().0, k.0);
    }

    #[test]
    fn code_hex_format() {
        let code = SecretCode::generate().unwrap();
        let text = code.to_hex();
        assert_eq!(text.len(), 64);
        assert!(text.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(SecretCode::from_hex(&text).unwrap(), code);
        assert!(SecretCode::from_hex("abcd").is_err());
        assert_eq!(format!("{code:?}"), "SecretCode(..)");
    }
}
