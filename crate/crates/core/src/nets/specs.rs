//! Architecture descriptions. Parameter shapes (and therefore counts) are
//! derivable from these specs alone.

/// Denoising generator: a plain stack of 3x3 stride-1 convolutions, ReLU on
/// every hidden layer, linear single-filter output, no skip connections.
/// Same-padding keeps the output shape equal to the input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n_layers: usize,
    pub hidden_filters: usize,
    pub kernel: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec { n_layers: 8, hidden_filters: 32, kernel: 3 }
    }
}

impl GeneratorSpec {
    pub const TAG: &'static str = "wvgg.generator";

    /// Channel widths per layer as (in, out) pairs.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        (0..self.n_layers)
            .map(|i| {
                let cin = if i == 0 { 1 } else { self.hidden_filters };
                let cout = if i == self.n_layers - 1 { 1 } else { self.hidden_filters };
                (cin, cout)
            })
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut shapes = Vec::new();
        for (i, (cin, cout)) in self.layer_channels().into_iter().enumerate() {
            shapes.push((format!("conv{i}.weight"), vec![cout, cin, k, k]));
            shapes.push((format!("conv{i}.bias"), vec![cout]));
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Smallest input side the stacked receptive field makes sense for.
    pub const MIN_SIDE: usize = 9;
}

/// Critic: six 3x3 convolutions with leaky-ReLU activations, strides
/// alternating 1/2, then two fully-connected layers ending in a single
/// unbounded score (no sigmoid).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorSpec {
    pub conv_filters: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: f64,
    pub fc_hidden: usize,
    /// Training patch side; fixes the flattened size feeding the FC head.
    pub patch_side: usize,
}

impl DiscriminatorSpec {
    pub const TAG: &'static str = "wvgg.critic";

    pub fn for_patch(patch_side: usize) -> Self {
        DiscriminatorSpec {
            conv_filters: vec![64, 64, 128, 128, 256, 256],
            strides: vec![1, 2, 1, 2, 1, 2],
            kernel: 3,
            leaky_slope: 0.2,
            fc_hidden: 1024,
            patch_side,
        }
    }

    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Spatial side after each conv layer, starting from the patch side.
    pub fn spatial_sides(&self) -> Vec<usize> {
        let mut side = self.patch_side;
        let mut sides = Vec::with_capacity(self.strides.len());
        for &s in &self.strides {
            side = crate::autodiff::kernels::conv_out_len(side, self.kernel, s, self.pad());
            sides.push(side);
        }
        sides
    }

    /// Flattened feature size entering the first FC layer.
    pub fn flat_size(&self) -> usize {
        let side = *self.spatial_sides().last().unwrap();
        side * side * *self.conv_filters.last().unwrap()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut shapes = Vec::new();
        let mut cin = 1;
        for (i, &cout) in self.conv_filters.iter().enumerate() {
            shapes.push((format!("conv{i}.weight"), vec![cout, cin, k, k]));
            shapes.push((format!("conv{i}.bias"), vec![cout]));
            cin = cout;
        }
        shapes.push(("fc0.weight".to_string(), vec![self.flat_size(), self.fc_hidden]));
        shapes.push(("fc0.bias".to_string(), vec![self.fc_hidden]));
        shapes.push(("fc1.weight".to_string(), vec![self.fc_hidden, 1]));
        shapes.push(("fc1.bias".to_string(), vec![1]));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Frozen feature extractor: a small convolutional stack applied to
/// channel-duplicated grayscale input; the feature map is the
/// post-activation output of `tap_layer`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractorSpec {
    pub conv_filters: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    /// Convolutional layer whose activations form the feature map
    /// (0-based; defaults to the deepest layer).
    pub tap_layer: usize,
    /// Grayscale input is duplicated to this many channels first.
    pub input_channels: usize,
}

impl Default for FeatureExtractorSpec {
    fn default() -> Self {
        FeatureExtractorSpec {
            conv_filters: vec![16, 16, 32, 32, 64, 64],
            strides: vec![1, 2, 1, 2, 1, 1],
            kernel: 3,
            tap_layer: 5,
            input_channels: 3,
        }
    }
}

impl FeatureExtractorSpec {
    pub const TAG: &'static str = "wvgg.features";

    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn n_layers(&self) -> usize {
        self.conv_filters.len()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut shapes = Vec::new();
        let mut cin = self.input_channels;
        for (i, &cout) in self.conv_filters.iter().enumerate() {
            shapes.push((format!("conv{i}.weight"), vec![cout, cin, k, k]));
            shapes.push((format!("conv{i}.bias"), vec![cout]));
            cin = cout;
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Channel count of the tapped feature map.
    pub fn feature_channels(&self) -> usize {
        self.conv_filters[self.tap_layer]
    }

    /// Spatial side of the feature map for a given input side.
    pub fn feature_side(&self, input_side: usize) -> usize {
        let mut side = input_side;
        for &s in self.strides.iter().take(self.tap_layer + 1) {
            side = crate::autodiff::kernels::conv_out_len(side, self.kernel, s, self.pad());
        }
        side
    }
}
