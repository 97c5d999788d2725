//! 8-bit RGB raster used for synthetic frames and on-disk sequences.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// Row-major interleaved RGB.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixel(y as usize * self.width as usize + x as usize)
    }

    /// Pixel by linear index.
    #[inline]
    pub fn pixel(&self, i: usize) -> [u8; 3] {
        let o = i * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = (y as usize * self.width as usize + x as usize) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}
