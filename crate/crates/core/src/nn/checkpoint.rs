//! Little-endian binary serialization of networks and optimizer state.
//!
//! Every value is written at full precision, so a round trip is bit-exact.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::adam::Adam;
use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    write_u64(w, bytes.len() as u64)?;
    w.write_all(bytes)?;
    Ok(())
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

// Guards allocations against corrupt length fields.
const MAX_LEN: u64 = 1 << 28;

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = read_u64(r)?;
    if n > MAX_LEN {
        return Err(Error::Checkpoint(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

pub fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_len(r)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn write_values<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        write_f64(w, *v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn read_vector<R: Read>(r: &mut R, n: usize) -> Result<Array1<f64>> {
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(read_f64(r)?);
    }
    Ok(Array1::from(data))
}

fn write_grads<W: Write>(w: &mut W, g: &MlpGrads) -> Result<()> {
    for (wm, b) in g.weights.iter().zip(&g.biases) {
        write_values(w, wm.iter())?;
        write_values(w, b.iter())?;
    }
    Ok(())
}

fn read_grads<R: Read>(r: &mut R, sizes: &[usize]) -> Result<MlpGrads> {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for p in sizes.windows(2) {
        weights.push(read_matrix(r, p[0], p[1])?);
        biases.push(read_vector(r, p[1])?);
    }
    Ok(MlpGrads { weights, biases })
}

/// Layer count, layer sizes, then row-major weights and biases per layer.
pub fn write_mlp<W: Write>(w: &mut W, net: &Mlp) -> Result<()> {
    write_u64(w, net.sizes().len() as u64)?;
    for &s in net.sizes() {
        write_u64(w, s as u64)?;
    }
    for l in 0..net.num_layers() {
        write_values(w, net.weights(l).iter())?;
        write_values(w, net.biases(l).iter())?;
    }
    Ok(())
}

pub fn read_mlp<R: Read>(r: &mut R) -> Result<Mlp> {
    let n = read_len(r)?;
    if n < 2 {
        return Err(Error::Checkpoint(format!("network with {n} layer sizes")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        sizes.push(read_len(r)?);
    }
    let g = read_grads(r, &sizes)?;
    Mlp::from_parts(sizes, g.weights, g.biases)
}

pub fn write_adam<W: Write>(w: &mut W, adam: &Adam) -> Result<()> {
    for v in [adam.lr, adam.beta1, adam.beta2, adam.eps] {
        write_f64(w, v)?;
    }
    write_u64(w, adam.t)?;
    write_grads(w, &adam.m)?;
    write_grads(w, &adam.v)
}

/// Reads optimizer state for a network with layer widths `sizes`.
pub fn read_adam<R: Read>(r: &mut R, sizes: &[usize]) -> Result<Adam> {
    let lr = read_f64(r)?;
    let beta1 = read_f64(r)?;
    let beta2 = read_f64(r)?;
    let eps = read_f64(r)?;
    let t = read_u64(r)?;
    let m = read_grads(r, sizes)?;
    let v = read_grads(r, sizes)?;
    Ok(Adam {
        lr,
        beta1,
        beta2,
        eps,
        t,
        m,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_and_adam_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Mlp::new(&[3, 5, 4, 2], &mut rng).unwrap();
        let mut adam = Adam::new(&net, 1e-3);
        let x = ndarray::Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) / 3.0);
        let (y, tape) = net.forward(x.view()).unwrap();
        let (g, _) = net.backward(&tape, y.view(), false).unwrap();
        adam.step(&mut net, &g).unwrap();

        let mut buf = Vec::new();
        write_mlp(&mut buf, &net).unwrap();
        write_adam(&mut buf, &adam).unwrap();
        let mut r = &buf[..];
        let net2 = read_mlp(&mut r).unwrap();
        let adam2 = read_adam(&mut r, net2.sizes()).unwrap();
        assert!(r.is_empty());
        assert_eq!(net, net2);
        assert_eq!(adam, adam2);
        let bits = |n: &Mlp| n.params().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net), bits(&net2));
    }

    #[test]
    fn truncated_input_is_an_error() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        let mut buf = Vec::new();
        write_mlp(&mut buf, &net).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_mlp(&mut &buf[..]), Err(Error::Checkpoint(_))));
    }
}
