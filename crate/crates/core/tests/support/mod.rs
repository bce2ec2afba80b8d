pub mod noaa;
