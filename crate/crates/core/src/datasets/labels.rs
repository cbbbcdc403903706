//! Domain-class categories.
//!
//! With `K` classes there are `2K` categories: source class `k` is category
//! `k`, target class `k` is category `K + k`.

use super::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryLabel(usize);

impl CategoryLabel {
    /// Panics if `value >= 2K`.
    pub fn new(value: usize, num_classes: usize) -> Self {
        assert!(
            value < 2 * num_classes,
            "category {value} outside [0, {})",
            2 * num_classes
        );
        Self(value)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0
    }

    #[inline]
    pub fn class(self, num_classes: usize) -> usize {
        self.0 % num_classes
    }

    #[inline]
    pub fn domain(self, num_classes: usize) -> Domain {
        if self.0 < num_classes {
            Domain::Source
        } else {
            Domain::Target
        }
    }
}

/// Category of a labelled example: `class` for the source, `class + K` for
/// the target. Panics if `class >= K`.
pub fn relabel(class: usize, domain: Domain, num_classes: usize) -> CategoryLabel {
    assert!(class < num_classes, "class {class} outside [0, {num_classes})");
    match domain {
        Domain::Source => CategoryLabel(class),
        Domain::Target => CategoryLabel(class + num_classes),
    }
}

/// The same class in the other domain.
pub fn adversarial_relabel(category: CategoryLabel, num_classes: usize) -> CategoryLabel {
    assert!(category.0 < 2 * num_classes);
    if category.0 < num_classes {
        CategoryLabel(category.0 + num_classes)
    } else {
        CategoryLabel(category.0 - num_classes)
    }
}
