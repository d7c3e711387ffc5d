use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{alpha_for_len, check_alpha, AXES, FRAME_LEN};

/// Conv channels and encoder dense widths for each downsampling exponent.
const TABLE: [(usize, &[usize]); 8] = [
    (40, &[768, 768, 768, 768, 768]),
    (35, &[384, 384, 384, 384, 768, 768]),
    (30, &[192, 192, 192, 384, 768, 768]),
    (25, &[96, 96, 96, 96, 192, 384, 768, 768]),
    (20, &[48, 48, 48, 96, 192, 384, 768, 768]),
    (15, &[24, 24, 48, 96, 192, 384, 768, 768]),
    (10, &[12, 24, 48, 96, 192, 384, 768, 768]),
    (5, &[12, 24, 48, 96, 192, 384, 768, 768]),
];

/// Architecture and regularization of one enhancement model.
///
/// The encoder is two 3×3 same-padded convolutions over a 3 × `in_per_axis`
/// grid followed by the dense stack; the decoder is one 3×3 convolution over a
/// 3 × `out_per_axis` grid followed by one dense layer of width
/// `3 * out_per_axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AseConfig {
    pub alpha: u32,
    pub in_per_axis: usize,
    pub conv_channels: usize,
    pub encoder_dense_widths: Vec<usize>,
    pub out_per_axis: usize,
    pub l2_weight: f64,
    pub dropout_p: f64,
}

impl AseConfig {
    /// A model of arbitrary (small) size. `encoder_dense_widths` must end with
    /// `3 * out_per_axis`.
    pub fn custom(
        in_per_axis: usize,
        conv_channels: usize,
        encoder_dense_widths: Vec<usize>,
        out_per_axis: usize,
        l2_weight: f64,
        dropout_p: f64,
    ) -> Result<Self> {
        let alpha_in = alpha_for_len(in_per_axis)?;
        let alpha_out = alpha_for_len(out_per_axis)?;
        if alpha_in < alpha_out {
            return Err(Error::InvalidArgument(
                "model output must not be shorter than its input".into(),
            ));
        }
        let config = Self {
            alpha: alpha_in - alpha_out,
            in_per_axis,
            conv_channels,
            encoder_dense_widths,
            out_per_axis,
            l2_weight,
            dropout_p,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.conv_channels == 0 {
            return bad("conv channels must be positive".into());
        }
        if self.encoder_dense_widths.contains(&0) || self.encoder_dense_widths.is_empty() {
            return bad("encoder dense widths must be non-empty and positive".into());
        }
        if self.encoder_dense_widths.last() != Some(&self.decoder_dense_width()) {
            return bad(format!(
                "last encoder width must equal the decoder width {}",
                self.decoder_dense_width()
            ));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return bad(format!("l2 weight {} must be non-negative", self.l2_weight));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }

    /// Number of input values (`3 * in_per_axis`).
    pub fn in_len(&self) -> usize {
        AXES * self.in_per_axis
    }

    pub fn decoder_dense_width(&self) -> usize {
        AXES * self.out_per_axis
    }

    /// Width of the flattened encoder convolution output.
    pub fn conv_flat_len(&self) -> usize {
        self.conv_channels * self.in_len()
    }
}

/// Architecture for downsampling exponent `alpha`, following the per-rate
/// table: `5 * (8 - alpha)` conv channels and the tabulated dense widths.
pub fn build_config(alpha: u32, l2_weight: f64, dropout_p: f64) -> Result<AseConfig> {
    check_alpha(alpha)?;
    let (channels, widths) = TABLE[alpha as usize];
    debug_assert_eq!(channels, 5 * (8 - alpha as usize));
    let config = AseConfig {
        alpha,
        in_per_axis: FRAME_LEN >> alpha,
        conv_channels: channels,
        encoder_dense_widths: widths.to_vec(),
        out_per_axis: FRAME_LEN,
        l2_weight,
        dropout_p,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let c0 = build_config(0, 0.0, 0.0).unwrap();
        assert_eq!(c0.conv_channels, 40);
        assert_eq!(c0.encoder_dense_widths, vec![768; 5]);
        assert_eq!(c0.in_len(), 768);

        let c7 = build_config(7, 0.0, 0.0).unwrap();
        assert_eq!(c7.conv_channels, 5);
        assert_eq!(c7.encoder_dense_widths, vec![12, 24, 48, 96, 192, 384, 768, 768]);
        assert_eq!(c7.in_len(), 6);

        let c3 = build_config(3, 0.0, 0.0).unwrap();
        assert_eq!(c3.conv_channels, 25);
        assert_eq!(c3.encoder_dense_widths.len(), 8);
        assert_eq!(c3.encoder_dense_widths[0], 96);

        for alpha in 0..=7 {
            let c = build_config(alpha, 1e-4, 0.2).unwrap();
            assert_eq!(c.conv_channels, 5 * (8 - alpha as usize));
            assert_eq!(c.decoder_dense_width(), 768);
            assert_eq!(c.alpha, alpha);
        }
        assert!(build_config(8, 0.0, 0.0).is_err());
    }

    #[test]
    fn custom_validation() {
        let c = AseConfig::custom(4, 2, vec![8, 8, 12], 4, 0.0, 0.0).unwrap();
        assert_eq!(c.in_len(), 12);
        assert_eq!(c.alpha, 0);
        assert!(AseConfig::custom(4, 2, vec![8, 8], 4, 0.0, 0.0).is_err());
        assert!(AseConfig::custom(4, 0, vec![12], 4, 0.0, 0.0).is_err());
        assert!(AseConfig::custom(4, 2, vec![12], 4, -1.0, 0.0).is_err());
        assert!(AseConfig::custom(4, 2, vec![12], 4, 0.0, 1.0).is_err());
        assert!(AseConfig::custom(5, 2, vec![12], 4, 0.0, 0.0).is_err());
    }
}
