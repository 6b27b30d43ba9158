use serde::{Deserialize, Serialize};

use crate::channel::{DeviceGeometry, RoomLayout};
use crate::error::Result;
use crate::mobility::MobilityConfig;

/// Everything needed to simulate users and their optical channels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scene {
    pub layout: RoomLayout,
    pub device: DeviceGeometry,
    pub mobility: MobilityConfig,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.device.validate()?;
        self.mobility.validate(&self.layout)
    }

    pub fn num_aps(&self) -> usize {
        self.layout.num_aps()
    }
}
