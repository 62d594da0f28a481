//! Parameter naming and binding shared by the convolutional networks.

use alloc::format;

use super::graph::{Graph, Var};
use super::params::{Initializer, ParameterStore};
use crate::error::Result;

/// Largest group count not above 8 that divides `channels`.
pub fn group_count(channels: usize) -> usize {
    (1..=channels.clamp(1, 8)).rev().find(|g| channels % g == 0).unwrap_or(1)
}

impl Initializer<'_> {
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<()> {
        self.weight(&format!("{name}.w"), &[cout, cin, k], cin * k)?;
        self.constant(&format!("{name}.b"), &[cout], 0.0)
    }

    pub fn conv_transpose(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<()> {
        self.weight(&format!("{name}.w"), &[cin, cout, k], cin * k)?;
        self.constant(&format!("{name}.b"), &[cout], 0.0)
    }

    pub fn linear(&mut self, name: &str, nin: usize, nout: usize) -> Result<()> {
        self.weight(&format!("{name}.w"), &[nout, nin], nin)?;
        self.constant(&format!("{name}.b"), &[nout], 0.0)
    }

    pub fn group_norm(&mut self, name: &str, channels: usize) -> Result<()> {
        self.constant(&format!("{name}.gamma"), &[channels], 1.0)?;
        self.constant(&format!("{name}.beta"), &[channels], 0.0)
    }
}

/// A graph paired with the store its parameters are bound from.
pub struct Layers<'g, 's> {
    pub g: &'g mut Graph,
    pub store: &'s ParameterStore,
}

impl Layers<'_, '_> {
    pub fn conv(&mut self, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.g.param(self.store, &format!("{name}.w"))?;
        let b = self.g.param(self.store, &format!("{name}.b"))?;
        self.g.conv1d(x, w, Some(b), stride, pad)
    }

    pub fn conv_transpose(&mut self, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.g.param(self.store, &format!("{name}.w"))?;
        let b = self.g.param(self.store, &format!("{name}.b"))?;
        self.g.conv_transpose1d(x, w, Some(b), stride, pad)
    }

    pub fn linear(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.g.param(self.store, &format!("{name}.w"))?;
        let b = self.g.param(self.store, &format!("{name}.b"))?;
        self.g.linear(x, w, Some(b))
    }

    pub fn group_norm(&mut self, name: &str, x: Var) -> Result<Var> {
        let c = self.g.shape(x)[1];
        let gamma = self.g.param(self.store, &format!("{name}.gamma"))?;
        let beta = self.g.param(self.store, &format!("{name}.beta"))?;
        self.g.group_norm(x, gamma, beta, group_count(c))
    }
}
