use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MlError;
use crate::features::{AttributeVector, ATTRIBUTE_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: Vec<Option<f64>>,
    pub label: usize,
    pub weight: f64,
    /// Sub-profile window the instance was cut from, if known.
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub attribute_names: Vec<String>,
    pub class_names: Vec<String>,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new<A: ToString, C: ToString>(attribute_names: &[A], class_names: &[C]) -> Self {
        Dataset {
            attribute_names: attribute_names.iter().map(|a| a.to_string()).collect(),
            class_names: class_names.iter().map(|c| c.to_string()).collect(),
            instances: Vec::new(),
        }
    }

    /// Empty dataset over the seven traffic attributes.
    pub fn traffic<C: ToString>(class_names: &[C]) -> Self {
        Self::new(&ATTRIBUTE_NAMES, class_names)
    }

    pub fn push(&mut self, values: Vec<Option<f64>>, label: usize) -> Result<(), MlError> {
        self.push_instance(Instance {
            values,
            label,
            weight: 1.0,
            window: None,
        })
    }

    pub fn push_attributes(
        &mut self,
        attrs: &AttributeVector,
        label: usize,
        window: Option<usize>,
    ) -> Result<(), MlError> {
        self.push_instance(Instance {
            values: attrs.values().to_vec(),
            label,
            weight: 1.0,
            window,
        })
    }

    pub fn push_instance(&mut self, inst: Instance) -> Result<(), MlError> {
        if inst.values.len() != self.attribute_names.len() {
            return Err(MlError::AttributeCount {
                expected: self.attribute_names.len(),
                got: inst.values.len(),
            });
        }
        if inst.label >= self.class_names.len() {
            return Err(MlError::LabelOutOfRange {
                label: inst.label,
                classes: self.class_names.len(),
            });
        }
        if !(inst.weight > 0.0) {
            return Err(MlError::BadParams("instance weight must be positive"));
        }
        self.instances.push(inst);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes()];
        for inst in &self.instances {
            counts[inst.label] += 1;
        }
        counts
    }

    pub fn total_weight(&self) -> f64 {
        self.instances.iter().map(|i| i.weight).sum()
    }

    /// Copy holding the given instances, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            attribute_names: self.attribute_names.clone(),
            class_names: self.class_names.clone(),
            instances: indices.iter().map(|i| self.instances[*i].clone()).collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&Instance) -> bool) -> Dataset {
        Dataset {
            attribute_names: self.attribute_names.clone(),
            class_names: self.class_names.clone(),
            instances: self.instances.iter().filter(|i| keep(i)).cloned().collect(),
        }
    }
}
