//! Sparse byte-addressable backing store for global memory.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

const PAGE: u64 = 4096;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalMemory {
    size: u64,
    pages: BTreeMap<u64, Box<[u8; PAGE as usize]>>,
}

impl GlobalMemory {
    pub fn new(size: u64) -> Self {
        GlobalMemory { size, pages: BTreeMap::new() }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn in_range(&self, addr: u64, len: u64) -> bool {
        addr.checked_add(len).is_some_and(|end| end <= self.size)
    }

    pub fn read(&self, addr: u64, buf: &mut [u8]) {
        let mut a = addr;
        let mut done = 0;
        while done < buf.len() {
            let page = a / PAGE;
            let off = (a % PAGE) as usize;
            let n = (PAGE as usize - off).min(buf.len() - done);
            match self.pages.get(&page) {
                Some(p) => buf[done..done + n].copy_from_slice(&p[off..off + n]),
                None => buf[done..done + n].fill(0),
            }
            done += n;
            a += n as u64;
        }
    }

    pub fn write(&mut self, addr: u64, bytes: &[u8]) {
        let mut a = addr;
        let mut done = 0;
        while done < bytes.len() {
            let page = a / PAGE;
            let off = (a % PAGE) as usize;
            let n = (PAGE as usize - off).min(bytes.len() - done);
            let chunk = &bytes[done..done + n];
            if let Some(p) = self.pages.get_mut(&page) {
                p[off..off + n].copy_from_slice(chunk);
            } else if chunk.iter().any(|&b| b != 0) {
                let mut p = Box::new([0u8; PAGE as usize]);
                p[off..off + n].copy_from_slice(chunk);
                self.pages.insert(page, p);
            }
            done += n;
            a += n as u64;
        }
    }

    /// Write the bytes of `data` selected by `mask` (bit i ↔ byte i).
    pub fn write_masked(&mut self, addr: u64, data: &[u8], mask: u128) {
        let mut i = 0;
        while i < data.len() {
            if mask >> i & 1 == 0 {
                i += 1;
                continue;
            }
            let start = i;
            while i < data.len() && mask >> i & 1 == 1 {
                i += 1;
            }
            self.write(addr + start as u64, &data[start..i]);
        }
    }

    pub fn read_u64(&self, addr: u64) -> u64 {
        let mut b = [0; 8];
        self.read(addr, &mut b);
        u64::from_le_bytes(b)
    }

    pub fn write_u64(&mut self, addr: u64, v: u64) {
        self.write(addr, &v.to_le_bytes());
    }

    pub fn read_vec(&self, addr: u64, len: usize) -> Vec<u8> {
        let mut v = vec![0; len];
        self.read(addr, &mut v);
        v
    }

    /// Non-zero pages in address order; all other bytes are zero.
    pub fn pages(&self) -> impl Iterator<Item = (u64, &[u8])> {
        self.pages
            .iter()
            .filter(|(_, p)| p.iter().any(|&b| b != 0))
            .map(|(&n, p)| (n * PAGE, &p[..]))
    }

    /// Content equality ignoring allocation (zero pages equal absent pages).
    pub fn same_contents(&self, other: &GlobalMemory) -> bool {
        self.pages().eq(other.pages())
    }

    /// First address at which the two images differ.
    pub fn first_difference(&self, other: &GlobalMemory) -> Option<u64> {
        let keys: std::collections::BTreeSet<u64> =
            self.pages.keys().chain(other.pages.keys()).copied().collect();
        for page in keys {
            let a = self.read_vec(page * PAGE, PAGE as usize);
            let b = other.read_vec(page * PAGE, PAGE as usize);
            if let Some(i) = a.iter().zip(&b).position(|(x, y)| x != y) {
                return Some(page * PAGE + i as u64);
            }
        }
        None
    }

    /// SHA-256 over a byte range.
    pub fn digest_range(&self, addr: u64, len: u64) -> String {
        let mut h = Sha256::new();
        let mut a = addr;
        let end = addr + len;
        let mut buf = vec![0u8; PAGE as usize];
        while a < end {
            let n = (end - a).min(PAGE) as usize;
            self.read(a, &mut buf[..n]);
            h.update(&buf[..n]);
            a += n as u64;
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_page_round_trip() {
        let mut m = GlobalMemory::new(1 << 20);
        let data: Vec<u8> = (1..=100).collect();
        m.write(PAGE - 50, &data);
        assert_eq!(m.read_vec(PAGE - 50, 100), data);
        assert_eq!(m.read_u64(0), 0);
    }

    #[test]
    fn masked_write() {
        let mut m = GlobalMemory::new(1 << 20);
        m.write_masked(64, &[1, 2, 3, 4], 0b1010);
        assert_eq!(m.read_vec(64, 4), vec![0, 2, 0, 4]);
    }

    #[test]
    fn zero_pages_compare_equal() {
        let mut a = GlobalMemory::new(1 << 20);
        let b = GlobalMemory::new(1 << 20);
        a.write(10, &[1]);
        a.write(10, &[0]);
        assert!(a.same_contents(&b));
        assert_eq!(a.first_difference(&b), None);
        a.write(5000, &[7]);
        assert_eq!(a.first_difference(&b), Some(5000));
    }
}
